#include "snftm/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace snftm::io {

namespace {

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

template <typename T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw UsageError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

double number(const json& j) {
  if (j.is_null()) return kInf;
  if (j.is_string() && j.get<std::string>() == "inf") return kInf;
  if (!j.is_number()) throw UsageError("expected a number");
  return j.get<double>();
}

json num(double x) { return std::isinf(x) ? json("inf") : json(x); }

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json score_json(const LinearScore& s) {
  return {{"intercept", s.intercept},        {"time", s.time},   {"covariate", s.covariate},
          {"prev_covariate", s.prev_covariate}, {"prev_treatment", s.prev_treatment},
          {"bin", s.bin},                    {"prognosis", s.prognosis}};
}

LinearScore score_from(const json& j) {
  LinearScore s;
  s.intercept = get_or(j, "intercept", 0.0);
  s.time = get_or(j, "time", 0.0);
  s.covariate = get_or(j, "covariate", 0.0);
  s.prev_covariate = get_or(j, "prev_covariate", 0.0);
  s.prev_treatment = get_or(j, "prev_treatment", 0.0);
  s.bin = get_or(j, "bin", std::vector<double>{});
  s.prognosis = get_or(j, "prognosis", 0.0);
  return s;
}

json law_json(const CategoricalLaw& law) {
  json out = json::object();
  if (law.softmax()) {
    json scores = json::array();
    for (const auto& s : law.softmax()->scores) scores.push_back(score_json(s));
    out["softmax"] = {{"prognosis_rate", law.softmax()->prognosis_rate}, {"scores", scores}};
  }
  json table = json::array();
  for (const auto& [key, p] : law.table())
    table.push_back({{"k", key.k}, {"bin", key.bin}, {"l", key.l}, {"a", key.a}, {"p", p}});
  out["table"] = table;
  return out;
}

CategoricalLaw law_from(const json& j) {
  CategoricalLaw law;
  if (j.contains("softmax")) {
    SoftmaxLaw sm;
    sm.prognosis_rate = get_or(j["softmax"], "prognosis_rate", 1.0);
    for (const auto& s : get<json>(j["softmax"], "scores")) sm.scores.push_back(score_from(s));
    law = CategoricalLaw(sm);
  }
  for (const auto& row : get_or(j, "table", json::array()))
    law.set({get<int>(row, "k"), get_or(row, "bin", -1), get<History>(row, "l"), get<History>(row, "a")},
            get<std::vector<double>>(row, "p"));
  return law;
}

json shift_json(const ShiftModel& m) { return {{"features", m.feature_names()}, {"psi", from_vector(m.psi())}}; }

ShiftModel shift_from(const json& j, const TimeGrid& grid) {
  const auto names = get_or(j, "features", default_shift_feature_names());
  const auto psi = get_or(j, "psi", std::vector<double>(names.size(), 0.0));
  return ShiftModel(grid, to_vector(psi), names);
}

json curve_json(const SurvivalCurve& s) {
  return {{"start", s.start()}, {"breaks", s.breakpoints()}, {"rates", s.rates()}};
}

SurvivalCurve curve_from(const json& j) {
  return SurvivalCurve(get_or(j, "start", 0.0), get_or(j, "breaks", std::vector<double>{}),
                       get<std::vector<double>>(j, "rates"));
}

void check_version(const json& j) {
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion)
    throw UsageError("unsupported schema_version " + j["schema_version"].dump());
}

std::vector<int> alphabet_field(const json& j, const char* key, const TimeGrid& grid) {
  if (!j.contains(key)) throw UsageError(std::string("missing field '") + key + "'");
  if (j[key].is_number_integer()) return std::vector<int>(static_cast<std::size_t>(grid.K()) + 1, j[key].get<int>());
  return get<std::vector<int>>(j, key);
}

}  // namespace

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw UsageError("malformed JSON in " + source, line, col);
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) { return parse_json(read_text(path), path); }

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << content;
    out.flush();
    if (!out) throw UsageError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw UsageError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json to_json(const TimeGrid& grid, const Alphabets& alphabets) {
  return {{"taus", grid.taus()}, {"covariate_alphabet", alphabets.covariate}, {"treatment_alphabet", alphabets.treatment}};
}

TimeGrid grid_from_json(const json& j) { return TimeGrid(get<std::vector<double>>(j, "taus")); }

Alphabets alphabets_from_json(const json& j, const TimeGrid& grid) {
  Alphabets a{alphabet_field(j, "covariate_alphabet", grid), alphabet_field(j, "treatment_alphabet", grid)};
  a.validate(grid);
  return a;
}

json to_json(const DgpConfig& cfg) {
  json j = to_json(cfg.grid, cfg.alphabets);
  j["schema_version"] = kSchemaVersion;
  j["baseline"] = curve_json(cfg.baseline);
  j["thresholds"] = cfg.thresholds;
  j["covariate_law"] = law_json(cfg.covariate_law);
  j["treatment_law"] = law_json(cfg.treatment_law);
  j["shift"] = shift_json(cfg.model);
  j["seed"] = cfg.seed;
  return j;
}

DgpConfig dgp_from_json(const json& j) {
  check_version(j);
  TimeGrid grid = grid_from_json(j);
  Alphabets alph = alphabets_from_json(j, grid);
  DgpConfig cfg{grid,
                alph,
                curve_from(get<json>(j, "baseline")),
                get_or(j, "thresholds", std::vector<double>{}),
                law_from(get<json>(j, "covariate_law")),
                law_from(get<json>(j, "treatment_law")),
                shift_from(get_or(j, "shift", json::object()), grid),
                get_or(j, "seed", kDefaultSeed)};
  cfg.validate();
  return cfg;
}

std::vector<TreatmentRegime> regimes_from_json(const json& j, const TimeGrid& grid, const Alphabets& alphabets) {
  check_version(j);
  if (j.contains("regimes")) {
    std::vector<TreatmentRegime> out;
    for (const auto& r : j["regimes"]) {
      auto one = regimes_from_json(r, grid, alphabets);
      out.insert(out.end(), one.begin(), one.end());
    }
    return out;
  }
  const auto type = get<std::string>(j, "type");
  auto named = [&](TreatmentRegime g) {
    if (!j.contains("name")) return g;
    const TreatmentRegime inner = g;
    return TreatmentRegime(get<std::string>(j, "name"), [inner](int k, HistoryView l) { return inner.dose(k, l); });
  };
  if (type == "never") return {named(TreatmentRegime::never())};
  if (type == "static") return {named(TreatmentRegime::static_doses(get<History>(j, "doses")))};
  if (type == "threshold")
    return {named(TreatmentRegime::threshold(get<int>(j, "cut"), get_or(j, "dose", 1), get_or(j, "otherwise", 0)))};
  if (type == "table") {
    auto doses = get<std::vector<std::vector<int>>>(j, "doses");
    if (static_cast<int>(doses.size()) != grid.K() + 1) throw UsageError("table regime needs one row per visit");
    return {TreatmentRegime::table(alphabets, std::move(doses), get_or<std::string>(j, "name", "table"))};
  }
  throw UsageError("unknown regime type '" + type + "'");
}

json to_json(const GSpec& spec) {
  return {{"schema_version", kSchemaVersion},
          {"f_features", spec.model.f_features},
          {"g_transform", spec.model.g_transform},
          {"clip", {spec.model.clip_lo, num(spec.model.clip_hi)}},
          {"g_terms", spec.model.g_terms},
          {"shift_features", spec.shift_features}};
}

GSpec gspec_from_json(const json& j) {
  check_version(j);
  GSpec s;
  s.model.f_features = get_or(j, "f_features", s.model.f_features);
  s.model.g_transform = get_or(j, "g_transform", s.model.g_transform);
  if (j.contains("clip")) {
    const auto& c = j["clip"];
    if (!c.is_array() || c.size() != 2) throw UsageError("clip must be [lo, hi]");
    s.model.clip_lo = number(c[0]);
    s.model.clip_hi = number(c[1]);
  }
  s.model.g_terms = get_or(j, "g_terms", s.model.g_terms);
  s.shift_features = get_or(j, "shift_features", s.shift_features);
  s.model.validate();
  shift_features(s.shift_features);
  return s;
}

json to_json(const ParametricModel& m) {
  json coef = json::array();
  for (Eigen::Index c = 0; c < m.covariate_coef.rows(); ++c) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.covariate_coef.cols(); ++j) row.push_back(m.covariate_coef(c, j));
    coef.push_back(row);
  }
  return {{"schema_version", kSchemaVersion},
          {"shift_features", m.shift_features},
          {"psi", from_vector(m.psi)},
          {"baseline_breaks", m.baseline_breaks},
          {"log_rates", from_vector(m.log_rates)},
          {"bins", m.bins},
          {"prognosis_rate", m.prognosis_rate},
          {"covariate_coef", coef}};
}

ParametricModel model_from_json(const json& j, const TimeGrid& grid, const Alphabets& alphabets) {
  check_version(j);
  ParametricModel m = ParametricModel::initial(
      grid, alphabets, get_or(j, "shift_features", default_shift_feature_names()),
      get_or(j, "baseline_breaks", std::vector<double>{}), get_or(j, "bins", std::vector<double>{}),
      get_or(j, "prognosis_rate", 0.0));
  if (j.contains("psi")) m.psi = to_vector(get<std::vector<double>>(j, "psi"));
  if (j.contains("log_rates")) m.log_rates = to_vector(get<std::vector<double>>(j, "log_rates"));
  if (j.contains("covariate_coef")) {
    const auto rows = get<std::vector<std::vector<double>>>(j, "covariate_coef");
    if (static_cast<Eigen::Index>(rows.size()) != m.covariate_coef.rows())
      throw UsageError("covariate_coef needs one row per non-reference category");
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (static_cast<Eigen::Index>(rows[c].size()) != m.covariate_coef.cols())
        throw UsageError("covariate_coef row has the wrong length");
      for (std::size_t k = 0; k < rows[c].size(); ++k)
        m.covariate_coef(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = rows[c][k];
    }
  }
  m.validate();
  return m;
}

json to_json(const FittedWorld& w) {
  json j = to_json(w.model.grid(), w.alphabets);
  j["schema_version"] = kSchemaVersion;
  j["shift"] = shift_json(w.model);
  j["bins"] = w.bins;
  j["covariate_law"] = law_json(w.covariate_law);
  if (w.baseline) j["baseline"] = curve_json(*w.baseline);
  else j["baseline"] = {{"sample", w.baseline_sample}};
  return j;
}

FittedWorld world_from_json(const json& j) {
  check_version(j);
  TimeGrid grid = grid_from_json(j);
  FittedWorld w{shift_from(get<json>(j, "shift"), grid), alphabets_from_json(j, grid),
                get_or(j, "bins", std::vector<double>{}), law_from(get<json>(j, "covariate_law")), {}, std::nullopt};
  const json b = get<json>(j, "baseline");
  if (b.contains("sample")) {
    w.baseline_sample = get<std::vector<double>>(b, "sample");
    std::sort(w.baseline_sample.begin(), w.baseline_sample.end());
  } else {
    w.baseline = curve_from(b);
  }
  w.validate();
  return w;
}

json to_json(const ConditionalLaws& laws) {
  json j = to_json(laws.grid(), laws.alphabets());
  j["schema_version"] = kSchemaVersion;
  json cov = json::array();
  for (const auto& [key, p] : laws.covariate_cells()) cov.push_back({{"l", key.l}, {"a", key.a}, {"p", p}});
  json surv = json::array();
  for (const auto& [key, s] : laws.survival_cells()) {
    json segs = json::array();
    for (const auto& g : s.segments())
      segs.push_back({{"from", g.from}, {"offset", g.offset}, {"scale", g.scale}, {"rate", g.rate}});
    surv.push_back({{"l", key.l}, {"a", key.a}, {"start", s.start()}, {"end", num(s.end())}, {"segments", segs}});
  }
  j["covariate"] = cov;
  j["survival"] = surv;
  return j;
}

ConditionalLaws laws_from_json(const json& j) {
  check_version(j);
  TimeGrid grid = grid_from_json(j);
  ConditionalLaws laws(grid, alphabets_from_json(j, grid));
  for (const auto& c : get<json>(j, "covariate"))
    laws.set_covariate(get<History>(c, "l"), get<History>(c, "a"), get<std::vector<double>>(c, "p"));
  for (const auto& s : get<json>(j, "survival")) {
    std::vector<IntervalSurvival::Segment> segs;
    for (const auto& g : get<json>(s, "segments"))
      segs.push_back({get<double>(g, "from"), get<double>(g, "offset"), get<double>(g, "scale"), get<double>(g, "rate")});
    laws.set_survival(get<History>(s, "l"), get<History>(s, "a"),
                      IntervalSurvival(get<double>(s, "start"), number(get<json>(s, "end")), std::move(segs)));
  }
  return laws;
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::string out = "id,k,tau_k,L1,A,T_event\n";
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    const std::string id = std::to_string(i + 1);
    for (int k = 0; k <= s.last_visit(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out += id + "," + std::to_string(k) + "," + format_number(cohort.grid.tau(k)) + "," +
             std::to_string(s.covariates[ku]) + "," + std::to_string(s.treatments[ku]) + ",\n";
    }
    out += id + ",,,,," + format_number(s.event_time) + "\n";
  }
  return out;
}

Cohort cohort_from_csv(const std::string& text, const TimeGrid& grid, const Alphabets& alphabets) {
  Cohort cohort{grid, alphabets, {}};
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what, int col) { throw UsageError("cohort CSV: " + what, lineno, col); };
  if (!std::getline(in, line)) fail("empty file", 1);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,k,tau_k,L1,A,T_event") fail("header must be id,k,tau_k,L1,A,T_event", 1);
  std::string current;
  Trajectory tr;
  bool open = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::vector<int> cols;
    std::size_t pos = 0;
    while (true) {
      cols.push_back(static_cast<int>(pos) + 1);
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 6) fail("expected 6 columns, found " + std::to_string(cells.size()), 1);
    auto as_int = [&](int c) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(cells[static_cast<std::size_t>(c)], &used);
        if (used != cells[static_cast<std::size_t>(c)].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        fail("expected an integer", cols[static_cast<std::size_t>(c)]);
      }
      return 0;
    };
    auto as_real = [&](int c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[static_cast<std::size_t>(c)], &used);
        if (used != cells[static_cast<std::size_t>(c)].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        fail("expected a number", cols[static_cast<std::size_t>(c)]);
      }
      return 0.0;
    };
    if (cells[0].empty()) fail("missing id", 1);
    const bool terminal = cells[1].empty();
    if (!open) {
      current = cells[0];
      tr = Trajectory{};
      open = true;
    } else if (cells[0] != current) {
      fail("subject " + current + " has no terminal row", 1);
    }
    if (terminal) {
      for (int c = 2; c < 5; ++c)
        if (!cells[static_cast<std::size_t>(c)].empty()) fail("terminal row must leave k, tau_k, L1 and A empty", cols[static_cast<std::size_t>(c)]);
      tr.event_time = as_real(5);
      try {
        validate_trajectory(tr, grid, alphabets);
      } catch (const Error& e) {
        fail(std::string("subject ") + current + ": " + e.what(), cols[5]);
      }
      cohort.subjects.push_back(std::move(tr));
      open = false;
      continue;
    }
    if (!cells[5].empty()) fail("T_event belongs on the terminal row only", cols[5]);
    const int k = as_int(1);
    if (k != static_cast<int>(tr.covariates.size())) fail("visits must be listed in order from k = 0", cols[1]);
    if (k > grid.K()) fail("visit index beyond the grid", cols[1]);
    if (std::abs(as_real(2) - grid.tau(k)) > 1e-9 * std::max(1.0, grid.tau(k))) fail("tau_k disagrees with the grid", cols[2]);
    tr.covariates.push_back(as_int(3));
    tr.treatments.push_back(as_int(4));
  }
  if (open) throw UsageError("cohort CSV: subject " + current + " has no terminal row", lineno, 1);
  return cohort;
}

void write_cohort(const std::string& path, const Cohort& cohort) {
  json side = to_json(cohort.grid, cohort.alphabets);
  side["schema_version"] = kSchemaVersion;
  write_atomic(path + ".json", side.dump(2) + "\n");
  write_atomic(path, cohort_to_csv(cohort));
}

Cohort read_cohort(const std::string& path) {
  const json side = read_json(path + ".json");
  check_version(side);
  const TimeGrid grid = grid_from_json(side);
  return cohort_from_csv(read_text(path), grid, alphabets_from_json(side, grid));
}

std::string curve_to_csv(const CurveEstimate& curve) {
  std::string out = "t,survival,stderr\n";
  for (std::size_t i = 0; i < curve.times.size(); ++i)
    out += format_number(curve.times[i]) + "," + format_number(curve.survival[i]) + "," +
           format_number(curve.stderr_[i]) + "\n";
  return out;
}

std::vector<double> parse_range(const std::string& spec) {
  double a = 0, b = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(spec);
  if (!(in >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof())
    throw UsageError("range must look like a:b:step, got '" + spec + "'");
  if (!(step > 0.0) || !(b >= a)) throw UsageError("range needs step > 0 and b >= a");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(a + step * static_cast<double>(i));
  return out;
}

SearchBox parse_box(const std::string& spec) {
  SearchBox box;
  std::istringstream in(spec);
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw UsageError("box must look like lo:hi[,lo:hi...], got '" + spec + "'");
    try {
      box.ranges.emplace_back(std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("box bounds must be numbers, got '" + part + "'");
    }
  }
  if (box.ranges.empty()) throw UsageError("empty search box");
  return box;
}

Vector parse_vector(const std::string& spec) {
  std::vector<double> v;
  std::istringstream in(spec);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw UsageError("expected comma-separated numbers, got '" + spec + "'");
    }
  }
  return to_vector(v);
}

}  // namespace snftm::io
