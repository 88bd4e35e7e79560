#include "snftm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <functional>

#include "snftm/cfsim.hpp"
#include "snftm/gcomp.hpp"
#include "snftm/gest.hpp"
#include "snftm/io.hpp"
#include "snftm/mle.hpp"
#include "snftm/oracle.hpp"

namespace snftm {

namespace {

using io::json;

struct Options {
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  int threads = 1;
  double tol = 0.0;
  std::string out;
  std::string dgp, cohort, laws, regime, spec, model, world, world_out, box, t_grid, psi, psi0, suite = "all", bins;
  std::size_t n = 0;
  std::size_t mc = 0;
  double pitch = 0.01;
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_output(const std::string& path) {
  if (path.empty()) throw UsageError("--out is required");
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir))
    throw UsageError("output directory '" + dir.string() + "' does not exist");
}

void check_input(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("input file '" + path + "' does not exist");
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

json report_json(const GTestReport& r) {
  return {{"alpha", vec_json(r.alpha)}, {"alpha_se", vec_json(r.alpha_se)}, {"df", r.df},
          {"records", r.records},       {"wald", r.wald},                    {"wald_p", r.wald_p},
          {"score", r.score},           {"score_p", r.score_p}};
}

json check_json(const CheckResult& c) {
  json failures = json::array();
  for (std::size_t i = 0; i < c.failures.size() && i < 20; ++i) failures.push_back(c.failures[i]);
  return {{"name", c.name},         {"pass", c.pass},   {"skipped", c.skipped},       {"worst", c.worst},
          {"tolerance", c.tolerance}, {"evaluations", c.evaluations}, {"failures", failures},
          {"failure_count", c.failures.size()}, {"notes", c.notes}};
}

ConditionalLaws load_laws(const std::string& path) {
  if (ends_with(path, ".csv")) return estimate_laws(io::read_cohort(path));
  const json j = io::read_json(path);
  if (j.contains("covariate_law")) return true_conditional_laws(io::dgp_from_json(j));
  return io::laws_from_json(j);
}

TreatmentRegime load_regime(const std::string& path, const TimeGrid& grid, const Alphabets& alph) {
  const auto regimes = io::regimes_from_json(io::read_json(path), grid, alph);
  if (regimes.size() != 1) throw UsageError("regime file must hold exactly one regime");
  return regimes.front();
}

int cmd_simulate(const Options& o, std::ostream& out) {
  DgpConfig cfg = io::dgp_from_json(io::read_json(o.dgp));
  if (o.seed_given) cfg = cfg.with_seed(o.seed);
  if (!o.psi.empty()) cfg = cfg.with_psi(io::parse_vector(o.psi));
  if (o.n < 1) throw UsageError("--n must be >= 1");
  const Cohort cohort = sample_cohort(cfg, o.n, o.threads);
  io::write_cohort(o.out, cohort);
  out << json{{"subjects", cohort.subjects.size()}, {"out", o.out}}.dump() << "\n";
  return 0;
}

int cmd_gcomp(const Options& o, std::ostream& out) {
  const ConditionalLaws laws = load_laws(o.laws);
  const TreatmentRegime g = load_regime(o.regime, laws.grid(), laws.alphabets());
  const auto times = io::parse_range(o.t_grid);
  CurveEstimate curve;
  if (o.mc > 0) {
    curve = mc_gcomp(laws, g, times, o.mc, o.seed, o.threads);
  } else {
    curve.times = times;
    for (double t : times) {
      curve.survival.push_back(t > 0.0 ? s_marginal(laws, g, t) : 1.0);
      curve.stderr_.push_back(0.0);
    }
  }
  io::write_atomic(o.out, io::curve_to_csv(curve));
  out << json{{"regime", g.name()}, {"points", times.size()}, {"out", o.out}}.dump() << "\n";
  return 0;
}

int cmd_gtest(const Options& o, std::ostream& out) {
  const Cohort cohort = io::read_cohort(o.cohort);
  const io::GSpec spec = io::gspec_from_json(io::read_json(o.spec));
  json j{{"schema_version", io::kSchemaVersion}};
  if (o.psi0.empty()) {
    j["hypothesis"] = "g-null";
    j["test"] = report_json(g_null_test(cohort, spec.model));
  } else {
    const ShiftModel cand(cohort.grid, io::parse_vector(o.psi0), spec.shift_features);
    j["hypothesis"] = "psi0";
    j["psi0"] = vec_json(cand.psi());
    j["test"] = report_json(g_test(cohort, spec.model, cand));
  }
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) out << text;
  else io::write_atomic(o.out, text);
  return 0;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  const Cohort cohort = io::read_cohort(o.cohort);
  const io::GSpec spec = io::gspec_from_json(io::read_json(o.spec));
  const SearchBox box = io::parse_box(o.box);
  const ShiftModel shape(cohort.grid, Vector::Zero(box.dim()), spec.shift_features);
  const GEstimation est(cohort, spec.model, shape);
  EstimateOptions opt;
  opt.pitch = o.pitch;
  if (o.tol > 0.0) opt.root_tol = o.tol;
  opt.trace = true;
  opt.threads = o.threads;
  const PsiEstimate e = estimate_psi(est, box, opt);
  json roots = json::array();
  for (const auto& r : e.roots) roots.push_back(vec_json(r));
  json grid = json::array();
  for (std::size_t i = 0; i < e.grid.size(); ++i)
    grid.push_back({{"psi", vec_json(e.grid[i])}, {"p_value", e.grid_p[i]}, {"accepted", static_cast<bool>(e.accepted[i])},
                    {"alpha_hat", vec_json(e.alpha_trace[i])}});
  json ci = json::array();
  for (const auto& [lo, hi] : e.ci) {
    if (lo > hi) ci.push_back(nullptr);
    else ci.push_back({lo, hi});
  }
  const json j{{"schema_version", io::kSchemaVersion},
               {"shift_features", spec.shift_features},
               {"psi_hat", vec_json(e.psi)},
               {"se", vec_json(e.sandwich.se)},
               {"variance", mat_json(e.sandwich.variance)},
               {"alpha_at_psi_hat", vec_json(e.alpha_at_psi)},
               {"roots", roots},
               {"multiple_roots", e.multiple_roots},
               {"ci", ci},
               {"ci_touches_box", e.ci_touches_box},
               {"level", opt.level},
               {"pitch", opt.pitch},
               {"grid", grid}};
  io::write_atomic(o.out, j.dump(2) + "\n");
  if (!o.world_out.empty()) {
    std::vector<double> bins;
    if (!o.bins.empty()) {
      const Vector b = io::parse_vector(o.bins);
      bins.assign(b.data(), b.data() + b.size());
    }
    const FittedWorld w = FittedWorld::from_cohort(cohort, shape.with_psi(e.psi), bins);
    io::write_atomic(o.world_out, io::to_json(w).dump() + "\n");
  }
  out << json{{"psi_hat", vec_json(e.psi)}, {"se", vec_json(e.sandwich.se)}}.dump() << "\n";
  return 0;
}

int cmd_mle(const Options& o, std::ostream& out) {
  const Cohort cohort = io::read_cohort(o.cohort);
  const ParametricModel init = io::model_from_json(io::read_json(o.model), cohort.grid, cohort.alphabets);
  MleOptions opt;
  opt.threads = o.threads;
  if (o.tol > 0.0) opt.grad_tol = o.tol;
  const MleFit full = fit_mle(cohort, init, opt);
  ParametricModel null_init = init;
  null_init.psi.setZero();
  MleOptions ropt = opt;
  ropt.fix_psi = true;
  const MleFit restricted = fit_mle(cohort, null_init, ropt);
  const NullTestReport t = test_null(full, restricted);
  const json j{{"schema_version", io::kSchemaVersion},
               {"model", io::to_json(full.model)},
               {"parameter_names", full.model.parameter_names()},
               {"estimate", vec_json(full.model.pack())},
               {"se", vec_json(full.se)},
               {"loglik", full.loglik},
               {"gradient_max", full.gradient.lpNorm<Eigen::Infinity>()},
               {"information", mat_json(full.information)},
               {"restricted_loglik", restricted.loglik},
               {"test", {{"df", t.df}, {"wald", t.wald}, {"wald_p", t.wald_p}, {"score", t.score},
                         {"score_p", t.score_p}, {"lr", t.lr}, {"lr_p", t.lr_p}}}};
  io::write_atomic(o.out, j.dump(2) + "\n");
  out << json{{"psi_hat", vec_json(full.model.psi)}, {"lr", t.lr}, {"lr_p", t.lr_p}}.dump() << "\n";
  return 0;
}

int cmd_cfsim(const Options& o, std::ostream& out) {
  FittedWorld w = [&] {
    if (!o.world.empty()) return io::world_from_json(io::read_json(o.world));
    return FittedWorld::from_dgp(io::dgp_from_json(io::read_json(o.dgp)));
  }();
  const TreatmentRegime g = load_regime(o.regime, w.model.grid(), w.alphabets);
  if (o.n < 1) throw UsageError("--n must be >= 1");
  const auto times = io::parse_range(o.t_grid);
  const CounterfactualSample s = simulate_counterfactual(w, g, o.n, times, o.seed, o.threads);
  io::write_atomic(o.out, io::curve_to_csv(s.curve));
  out << json{{"regime", g.name()}, {"n", o.n}, {"mean", s.curve.mean}, {"mean_se", s.curve.mean_se}}.dump() << "\n";
  return 0;
}

DgpConfig perturbed_treatment(const DgpConfig& cfg) {
  DgpConfig c = cfg;
  const auto& sm = cfg.treatment_law.softmax();
  if (!sm || !cfg.treatment_law.table().empty()) throw UnsupportedLaw("treatment law is not a pure softmax");
  SoftmaxLaw p = *sm;
  for (auto& s : p.scores) {
    s.intercept += 0.7;
    s.covariate -= 0.5;
  }
  c.treatment_law = CategoricalLaw(p);
  return c;
}

int cmd_verify(const Options& o, std::ostream& out) {
  const DgpConfig cfg = io::dgp_from_json(io::read_json(o.dgp));
  if (o.suite != "gcomp" && o.suite != "blip" && o.suite != "null" && o.suite != "all")
    throw UsageError("--suite must be gcomp, blip, null or all");
  const EnumeratedWorld world(cfg);
  const auto times = oracle_time_grid(cfg.grid);
  std::vector<VerifyReport> reports;
  bool truncated = false;
  const auto regimes = enumerate_regimes(cfg.grid, cfg.alphabets, 10000, o.seed, &truncated);
  if (o.suite == "gcomp" || o.suite == "all") {
    reports.push_back(verify_gcomputation(world, regimes, times, o.tol > 0.0 ? o.tol : 1e-10));
    try {
      const EnumeratedWorld other(perturbed_treatment(cfg));
      reports.push_back(verify_treatment_law_independence(world, other, regimes, times));
    } catch (const UnsupportedLaw&) {
    }
  }
  if (o.suite == "blip" || o.suite == "all")
    reports.push_back(verify_blip_theorems(world, cfg.model, times, o.tol > 0.0 ? o.tol : 1e-12));
  if (o.suite == "null" || o.suite == "all") {
    NullEquivalenceOptions nopt;
    nopt.seed = o.seed;
    reports.push_back(verify_null_equivalence(world, times, nopt));
  }
  bool pass = true;
  json suites = json::array();
  for (const auto& r : reports) {
    json checks = json::array();
    for (const auto& c : r.checks) checks.push_back(check_json(c));
    suites.push_back({{"suite", r.suite}, {"pass", r.pass()}, {"checks", checks}});
    pass = pass && r.pass();
  }
  const json j{{"schema_version", io::kSchemaVersion}, {"pass", pass}, {"atoms", world.atoms().size()},
               {"regimes", regimes.size()}, {"regimes_truncated", truncated}, {"suites", suites}};
  io::write_atomic(o.out, j.dump(2) + "\n");
  for (const auto& r : reports)
    for (const auto& c : r.checks)
      out << (c.skipped ? "SKIP " : c.pass ? "PASS " : "FAIL ") << c.name << " worst=" << io::format_number(c.worst)
          << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Structural nested failure time models: simulation, G-computation, G-estimation, likelihood "
               "inference, counterfactual simulation and exact verification.",
               "snftm");
  app.require_subcommand(1);
  Options o;
  std::function<int(const Options&, std::ostream&)> action;
  std::string command;

  auto common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--seed", o.seed, "Master seed (default 20031207)");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    auto* opt = sub->add_option("--out", o.out, "Output path");
    if (needs_out) opt->required();
  };
  auto add = [&](const std::string& name, const std::string& desc, auto fn) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->callback([&, name, fn] {
      command = name;
      action = fn;
    });
    return sub;
  };

  auto* sim = add("simulate", "Draw a cohort from a data-generating config", cmd_simulate);
  sim->add_option("--dgp", o.dgp, "dgp JSON")->required();
  sim->add_option("--n", o.n, "Number of subjects")->required();
  sim->add_option("--psi", o.psi, "Override psi0 (comma-separated)");
  common(sim);

  auto* gc = add("gcomp", "G-computation of a counterfactual survival curve", cmd_gcomp);
  gc->add_option("--laws", o.laws, "Cohort CSV, dgp JSON or laws JSON")->required();
  gc->add_option("--regime", o.regime, "Regime JSON")->required();
  gc->add_option("--t-grid", o.t_grid, "Times a:b:step")->required();
  gc->add_option("--mc", o.mc, "Monte Carlo draws instead of the exact recursion");
  common(gc);

  auto* gt = add("gtest", "Test of the treatment-model coefficient of T0 (G-null by default)", cmd_gtest);
  gt->add_option("--cohort", o.cohort, "Cohort CSV")->required();
  gt->add_option("--spec", o.spec, "Treatment-model spec JSON")->required();
  gt->add_option("--psi0", o.psi0, "Candidate psi (comma-separated); omitted for the G-null test");
  common(gt, false);

  auto* es = add("estimate", "G-estimation of psi with a test-inversion confidence set", cmd_estimate);
  es->add_option("--cohort", o.cohort, "Cohort CSV")->required();
  es->add_option("--spec", o.spec, "Treatment-model spec JSON")->required();
  es->add_option("--box", o.box, "Search box lo:hi[,lo:hi...]")->required();
  es->add_option("--pitch", o.pitch, "Grid pitch for the confidence set")->check(CLI::PositiveNumber);
  es->add_option("--tol", o.tol, "Root tolerance on |alpha-hat|");
  es->add_option("--world-out", o.world_out, "Also write a fitted world for cfsim");
  es->add_option("--bins", o.bins, "Prognosis cut points for the fitted world (comma-separated)");
  common(es);

  auto* ml = add("mle", "Maximum likelihood fit and tests of psi = 0", cmd_mle);
  ml->add_option("--cohort", o.cohort, "Cohort CSV")->required();
  ml->add_option("--model", o.model, "Parametric model JSON")->required();
  ml->add_option("--tol", o.tol, "Gradient tolerance");
  common(ml);

  auto* cf = add("cfsim", "Counterfactual survival by simulation from a fitted world", cmd_cfsim);
  cf->add_option("--world", o.world, "World JSON");
  cf->add_option("--dgp", o.dgp, "dgp JSON (exact world)");
  cf->add_option("--regime", o.regime, "Regime JSON")->required();
  cf->add_option("--n", o.n, "Draws")->required();
  cf->add_option("--t-grid", o.t_grid, "Times a:b:step")->required();
  common(cf);

  auto* vf = add("verify", "Exact oracle checks on a small dgp", cmd_verify);
  vf->add_option("--dgp", o.dgp, "dgp JSON")->required();
  vf->add_option("--suite", o.suite, "gcomp, blip, null or all");
  vf->add_option("--tol", o.tol, "Tolerance override");
  common(vf);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) o.seed_given = true;

  try {
    for (const auto* path : {&o.dgp, &o.cohort, &o.regime, &o.spec, &o.model, &o.world})
      if (!path->empty()) check_input(*path);
    if (!o.laws.empty()) check_input(o.laws);
    if (!o.cohort.empty()) check_input(o.cohort + ".json");
    if (command != "gtest" || !o.out.empty()) check_output(o.out);
    if (!o.world_out.empty()) check_output(o.world_out);
    if (command == "cfsim" && o.world.empty() == o.dgp.empty()) throw UsageError("cfsim needs exactly one of --world, --dgp");

    json log{{"command", command}, {"seed", o.seed}, {"threads", o.threads}, {"out", o.out}};
    for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
             {"dgp", o.dgp}, {"cohort", o.cohort}, {"laws", o.laws}, {"regime", o.regime}, {"spec", o.spec},
             {"model", o.model}, {"world", o.world}, {"world_out", o.world_out}, {"box", o.box},
             {"t_grid", o.t_grid}, {"psi", o.psi}, {"psi0", o.psi0}, {"bins", o.bins}})
      if (!v.empty()) log[k] = v;
    if (o.n > 0) log["n"] = o.n;
    if (o.mc > 0) log["mc"] = o.mc;
    if (o.tol > 0.0) log["tol"] = o.tol;
    if (command == "estimate") log["pitch"] = o.pitch;
    if (command == "verify") log["suite"] = o.suite;
    err << log.dump() << "\n";
    return action(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace snftm
