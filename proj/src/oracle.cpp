#include "snftm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snftm/gcomp.hpp"
#include "snftm/rng.hpp"

namespace snftm {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

std::size_t count_atoms(const TimeGrid& grid, const Alphabets& alph) {
  double total = 0.0, paths = 1.0;
  for (int k = 0; k <= grid.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    paths *= static_cast<double>(alph.covariate[ku]) * alph.treatment[ku];
    total += paths;
  }
  return total > 1e12 ? static_cast<std::size_t>(1e12) : static_cast<std::size_t>(total);
}

bool is_prefix(HistoryView prefix, HistoryView full) {
  return prefix.size() <= full.size() && std::equal(prefix.begin(), prefix.end(), full.begin());
}

}  // namespace

EnumeratedWorld::EnumeratedWorld(DgpConfig cfg)
    : cfg_(std::move(cfg)), bins_(cfg_.bins()), laws_(cfg_.grid, cfg_.alphabets) {
  cfg_.validate();
  if (cfg_.covariate_law.depends_on_t0())
    throw UnsupportedLaw("oracle needs covariate laws that depend on T0 only through its bin");
  if (count_atoms(cfg_.grid, cfg_.alphabets) > 1000000) throw InstanceTooLarge("oracle instance exceeds 1e6 atoms");
  laws_ = true_conditional_laws(cfg_);
  History l, a;
  enumerate(l, a, std::vector<double>(static_cast<std::size_t>(bins_.count()), 1.0), 0.0);
}

std::vector<double> EnumeratedWorld::covariate_row(int k, int bin, HistoryView l_prev, HistoryView a_prev) const {
  return covariate_probs(cfg_, k, bin, l_prev, a_prev);
}

void EnumeratedWorld::enumerate(History& l, History& a, const std::vector<double>& w, double thr) {
  const int k = static_cast<int>(l.size());
  const int nb = bins_.count();
  const double tau = cfg_.grid.tau(k);
  const double end = cfg_.grid.interval_end(k);
  const auto nl = cfg_.alphabets.covariate[static_cast<std::size_t>(k)];
  std::vector<std::vector<double>> cov(static_cast<std::size_t>(nb));
  for (int j = 0; j < nb; ++j)
    if (w[static_cast<std::size_t>(j)] > 0.0 && bins_.tail(j, thr) > 0.0)
      cov[static_cast<std::size_t>(j)] = covariate_row(k, j, l, a);
  for (int c = 0; c < nl; ++c) {
    std::vector<double> wl(static_cast<std::size_t>(nb), 0.0);
    bool any = false;
    for (int j = 0; j < nb; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!cov[ju].empty()) wl[ju] = w[ju] * cov[ju][static_cast<std::size_t>(c)];
      any = any || wl[ju] > 0.0;
    }
    if (!any) continue;
    l.push_back(c);
    const auto pa = treatment_probs(cfg_, k, l, a);
    for (std::size_t t = 0; t < pa.size(); ++t) {
      if (!(pa[t] > 0.0)) continue;
      a.push_back(static_cast<int>(t));
      std::vector<double> wa = wl;
      for (double& x : wa) x *= pa[t];
      const double slope = std::exp(cfg_.model.exponent(l, a));
      const double next = end == kInf ? kInf : thr + (end - tau) * slope;
      Atom atom{l, a, k, thr, next, slope, wa};
      if (atom_mass(atom) > 0.0) atoms_.push_back(atom);
      if (end != kInf) enumerate(l, a, wa, next);
      a.pop_back();
    }
    l.pop_back();
  }
}

double EnumeratedWorld::atom_mass(const Atom& atom) const { return atom_t0_tail(atom, atom.lo); }

double EnumeratedWorld::atom_t0_tail(const Atom& atom, double x) const {
  const double lo = std::max(atom.lo, x);
  if (!(atom.hi > lo)) return 0.0;
  double s = 0.0;
  for (int j = 0; j < bins_.count(); ++j) {
    const double wj = atom.weight[static_cast<std::size_t>(j)];
    if (wj > 0.0) s += wj * bins_.slab(j, lo, atom.hi);
  }
  return s;
}

double EnumeratedWorld::atom_blip_tail(const Atom& atom, const ShiftModel& check, int k, double x) const {
  const double tau_p = cfg_.grid.tau(atom.p);
  double y;  // threshold on the observed T
  if (k > atom.p) {
    y = x;
  } else {
    const double base = k == atom.p ? tau_p : blip_down(check, atom.l, atom.a, tau_p, k);
    y = tau_p + (x - base) / std::exp(check.exponent(atom.l, atom.a));
  }
  if (y <= tau_p) return atom_mass(atom);
  return atom_t0_tail(atom, atom.lo + atom.slope * (y - tau_p));
}

double EnumeratedWorld::history_mass(HistoryView l, HistoryView a) const {
  if (l.empty()) throw DomainError("history_mass: empty covariate history");
  const int k = static_cast<int>(l.size()) - 1;
  if (a.size() != l.size() && a.size() + 1 != l.size())
    throw DomainError("history_mass: treatment history must cover visits 0..k-1 or 0..k");
  const int nb = bins_.count();
  std::vector<double> w(static_cast<std::size_t>(nb), 1.0);
  double thr = 0.0;
  for (int m = 0; m <= k; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    for (int j = 0; j < nb; ++j) {
      auto& wj = w[static_cast<std::size_t>(j)];
      if (wj > 0.0 && bins_.tail(j, thr) > 0.0) wj *= covariate_row(m, j, l.first(mu), a.first(mu))[static_cast<std::size_t>(l[mu])];
      else wj = 0.0;
    }
    if (a.size() > mu) {
      const double pt = treatment_probs(cfg_, m, l.first(mu + 1), a.first(mu))[static_cast<std::size_t>(a[mu])];
      for (double& wj : w) wj *= pt;
    }
    if (m < k) thr += (cfg_.grid.tau(m + 1) - cfg_.grid.tau(m)) * std::exp(cfg_.model.exponent(l.first(mu + 1), a.first(mu + 1)));
  }
  double s = 0.0;
  for (int j = 0; j < nb; ++j) s += w[static_cast<std::size_t>(j)] * bins_.tail(j, thr);
  return s;
}

double EnumeratedWorld::treatment_factor(const Trajectory& traj) const {
  double f = 1.0;
  for (int m = 0; m <= traj.last_visit(); ++m) {
    const auto mu = static_cast<std::size_t>(m);
    f *= treatment_probs(cfg_, m, HistoryView(traj.covariates).first(mu + 1), HistoryView(traj.treatments).first(mu))
             [static_cast<std::size_t>(traj.treatments[mu])];
  }
  return f;
}

double EnumeratedWorld::joint_density(const Trajectory& traj) const {
  validate_trajectory(traj, cfg_.grid, cfg_.alphabets);
  const int p = traj.last_visit();
  for (const Atom& atom : atoms_) {
    if (atom.p != p || atom.l != traj.covariates || atom.a != traj.treatments) continue;
    const double d = atom.lo + atom.slope * (traj.event_time - cfg_.grid.tau(p));
    const int j = bins_.bin_of(d);
    const auto& s0 = bins_.baseline();
    return atom.weight[static_cast<std::size_t>(j)] * s0.hazard(d) * s0.clamped(d) * atom.slope;
  }
  return 0.0;
}

double EnumeratedWorld::cf_tail(const TreatmentRegime& g, History& l, History& a, const std::vector<double>& w,
                                double thr, int p, double t) const {
  const int k = static_cast<int>(l.size()) - 1;
  const int nb = bins_.count();
  a.push_back(g.dose(k, l));
  const double slope = std::exp(cfg_.model.exponent(l, a));
  const double tau = cfg_.grid.tau(k);
  double out = 0.0;
  if (k == p) {
    const double d = thr + slope * (t - tau);
    for (int j = 0; j < nb; ++j) out += w[static_cast<std::size_t>(j)] * bins_.tail(j, d);
  } else {
    const double next = thr + (cfg_.grid.tau(k + 1) - tau) * slope;
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(nb));
    for (int j = 0; j < nb; ++j)
      if (w[static_cast<std::size_t>(j)] > 0.0 && bins_.tail(j, next) > 0.0)
        cov[static_cast<std::size_t>(j)] = covariate_row(k + 1, j, l, a);
    for (int c = 0; c < cfg_.alphabets.covariate[static_cast<std::size_t>(k) + 1]; ++c) {
      std::vector<double> w2(static_cast<std::size_t>(nb), 0.0);
      bool any = false;
      for (int j = 0; j < nb; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (!cov[ju].empty()) w2[ju] = w[ju] * cov[ju][static_cast<std::size_t>(c)];
        any = any || w2[ju] > 0.0;
      }
      if (!any) continue;
      l.push_back(c);
      out += cf_tail(g, l, a, w2, next, p, t);
      l.pop_back();
    }
  }
  a.pop_back();
  return out;
}

double EnumeratedWorld::exact_survival(const TreatmentRegime& g, double t) const {
  const int p = cfg_.grid.interval_index(t);
  const int nb = bins_.count();
  History l, a;
  double out = 0.0;
  std::vector<double> w(static_cast<std::size_t>(nb));
  for (int c = 0; c < cfg_.alphabets.covariate[0]; ++c) {
    for (int j = 0; j < nb; ++j) w[static_cast<std::size_t>(j)] = covariate_row(0, j, {}, {})[static_cast<std::size_t>(c)];
    l.assign(1, c);
    out += cf_tail(g, l, a, w, 0.0, p, t);
  }
  return out;
}

double EnumeratedWorld::exact_conditional_survival(const TreatmentRegime& g, HistoryView lk, double t) const {
  if (lk.empty() || static_cast<int>(lk.size()) > cfg_.grid.K() + 1) throw GridBoundsError("bad history length");
  const int k = static_cast<int>(lk.size()) - 1;
  if (!(t > cfg_.grid.tau(k))) throw DomainError("conditional survival needs t > tau_k");
  History a = apply_regime(g, cfg_.grid, lk.first(static_cast<std::size_t>(k)));
  if (!(history_mass(lk, a) > 0.0))
    throw UndefinedCell("conditioning event has probability zero: " + describe_cell(lk, a));
  const int nb = bins_.count();
  std::vector<double> w(static_cast<std::size_t>(nb), 1.0);
  double thr = 0.0;
  for (int m = 0; m <= k; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    for (int j = 0; j < nb; ++j) {
      auto& wj = w[static_cast<std::size_t>(j)];
      if (wj > 0.0 && bins_.tail(j, thr) > 0.0) wj *= covariate_row(m, j, lk.first(mu), HistoryView(a).first(mu))[static_cast<std::size_t>(lk[mu])];
      else wj = 0.0;
    }
    if (m < k) thr += (cfg_.grid.tau(m + 1) - cfg_.grid.tau(m)) * std::exp(cfg_.model.exponent(lk.first(mu + 1), HistoryView(a).first(mu + 1)));
  }
  double den = 0.0;
  for (int j = 0; j < nb; ++j) den += w[static_cast<std::size_t>(j)] * bins_.tail(j, thr);
  History l(lk.begin(), lk.end());
  return cf_tail(g, l, a, w, thr, cfg_.grid.interval_index(t), t) / den;
}

double EnumeratedWorld::cf_mean(const TreatmentRegime& g, History& l, History& a, const std::vector<double>& w,
                                double thr) const {
  const int k = static_cast<int>(l.size()) - 1;
  const int nb = bins_.count();
  a.push_back(g.dose(k, l));
  const double slope = std::exp(cfg_.model.exponent(l, a));
  const double tau = cfg_.grid.tau(k);
  const double end = cfg_.grid.interval_end(k);
  const double next = end == kInf ? kInf : thr + (end - tau) * slope;
  const auto& s0 = bins_.baseline();
  // T = tau + (T0 - thr) / slope on (thr, next].
  double out = 0.0;
  for (int j = 0; j < nb; ++j) {
    const double wj = w[static_cast<std::size_t>(j)];
    const double lo = std::max(thr, bins_.lower(j));
    const double hi = std::min(next, bins_.upper(j));
    if (!(wj > 0.0) || !(hi > lo)) continue;
    out += wj * ((tau - thr / slope) * (s0.clamped(lo) - s0.clamped(hi)) + s0.partial_expectation(lo, hi) / slope);
  }
  if (end != kInf) {
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(nb));
    for (int j = 0; j < nb; ++j)
      if (w[static_cast<std::size_t>(j)] > 0.0 && bins_.tail(j, next) > 0.0)
        cov[static_cast<std::size_t>(j)] = covariate_row(k + 1, j, l, a);
    for (int c = 0; c < cfg_.alphabets.covariate[static_cast<std::size_t>(k) + 1]; ++c) {
      std::vector<double> w2(static_cast<std::size_t>(nb), 0.0);
      bool any = false;
      for (int j = 0; j < nb; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (!cov[ju].empty()) w2[ju] = w[ju] * cov[ju][static_cast<std::size_t>(c)];
        any = any || w2[ju] > 0.0;
      }
      if (!any) continue;
      l.push_back(c);
      out += cf_mean(g, l, a, w2, next);
      l.pop_back();
    }
  }
  a.pop_back();
  return out;
}

double EnumeratedWorld::exact_mean(const TreatmentRegime& g) const {
  const int nb = bins_.count();
  History l, a;
  double out = 0.0;
  std::vector<double> w(static_cast<std::size_t>(nb));
  for (int c = 0; c < cfg_.alphabets.covariate[0]; ++c) {
    for (int j = 0; j < nb; ++j) w[static_cast<std::size_t>(j)] = covariate_row(0, j, {}, {})[static_cast<std::size_t>(c)];
    l.assign(1, c);
    out += cf_mean(g, l, a, w, 0.0);
  }
  return out;
}

void CheckResult::record(double deviation, const std::string& where) {
  ++evaluations;
  if (!(deviation <= worst)) worst = std::isnan(deviation) ? kInf : deviation;
  if (!(deviation < tolerance)) {
    pass = false;
    if (failures.size() < 20) failures.push_back(where + ": deviation " + fmt(deviation));
  }
}

bool VerifyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

const CheckResult* VerifyReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<double> oracle_time_grid(const TimeGrid& grid, int n) {
  std::vector<double> ts;
  const double top = 2.5 * grid.tau(grid.K());
  for (int i = 1; i <= n; ++i) ts.push_back(top * i / n);
  return ts;
}

std::vector<TreatmentRegime> enumerate_regimes(const TimeGrid& grid, const Alphabets& alphabets, std::size_t cap,
                                               std::uint64_t seed, bool* truncated) {
  std::vector<std::size_t> sizes;
  std::vector<int> radix;
  double total = 1.0;
  for (int k = 0; k <= grid.K(); ++k) {
    const std::size_t n = alphabets.covariate_histories(k);
    sizes.push_back(n);
    for (std::size_t i = 0; i < n; ++i) radix.push_back(alphabets.treatment[static_cast<std::size_t>(k)]);
    total *= std::pow(static_cast<double>(alphabets.treatment[static_cast<std::size_t>(k)]), static_cast<double>(n));
  }
  auto build = [&](const std::vector<int>& digits, std::size_t id) {
    std::vector<std::vector<int>> doses;
    std::size_t pos = 0;
    for (std::size_t n : sizes) {
      doses.emplace_back(digits.begin() + static_cast<std::ptrdiff_t>(pos), digits.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
    }
    return TreatmentRegime::table(alphabets, std::move(doses), "regime#" + std::to_string(id));
  };
  std::vector<TreatmentRegime> out;
  std::vector<int> digits(radix.size(), 0);
  if (total <= static_cast<double>(cap)) {
    if (truncated) *truncated = false;
    const auto n = static_cast<std::size_t>(total);
    for (std::size_t id = 0; id < n; ++id) {
      out.push_back(build(digits, id));
      for (std::size_t d = 0; d < digits.size(); ++d) {
        if (++digits[d] < radix[d]) break;
        digits[d] = 0;
      }
    }
    return out;
  }
  if (truncated) *truncated = true;
  for (std::size_t id = 0; id < cap; ++id) {
    RandomStream rng(seed, stream_id("oracle.regimes"), id);
    for (std::size_t d = 0; d < digits.size(); ++d)
      digits[d] = std::min(radix[d] - 1, static_cast<int>(rng.uniform() * radix[d]));
    out.push_back(build(digits, id));
  }
  return out;
}

VerifyReport verify_gcomputation(const EnumeratedWorld& world, std::span<const TreatmentRegime> regimes,
                                 std::span<const double> times, double tol) {
  VerifyReport rep{"gcomp", {}};
  CheckResult marg{"gcomp.marginal"}, cond{"gcomp.conditional"}, eval{"gcomp.evaluability"};
  marg.tolerance = cond.tolerance = tol;
  const auto& grid = world.grid();
  const auto& alph = world.alphabets();
  std::size_t skipped = 0;
  for (const auto& g : regimes) {
    if (!is_evaluable(g, world)) {
      ++skipped;
      if (eval.notes.size() < 20) eval.notes.push_back(g.name() + " is not evaluable; skipped");
      continue;
    }
    for (double t : times)
      marg.record(std::abs(s_marginal(world.laws(), g, t) - world.exact_survival(g, t)),
                  g.name() + " t=" + fmt(t));
    for (int k = 0; k <= grid.K(); ++k) {
      for (std::size_t idx = 0; idx < alph.covariate_histories(k); ++idx) {
        const History l = history_from_index(alph, k, idx);
        const History a = apply_regime(g, grid, HistoryView(l).first(static_cast<std::size_t>(k)));
        if (!(world.history_mass(l, a) > 0.0)) continue;
        for (double t : times) {
          if (!(t > grid.tau(k))) continue;
          cond.record(std::abs(s_conditional(world.laws(), g, l, t) - world.exact_conditional_survival(g, l, t)),
                      g.name() + " " + describe_cell(l, a) + " t=" + fmt(t));
        }
      }
    }
  }
  eval.evaluations = regimes.size();
  eval.notes.insert(eval.notes.begin(), std::to_string(regimes.size() - skipped) + " of " +
                                            std::to_string(regimes.size()) + " regimes evaluable");
  rep.checks = {marg, cond, eval};
  return rep;
}

VerifyReport verify_treatment_law_independence(const EnumeratedWorld& a, const EnumeratedWorld& b,
                                               std::span<const TreatmentRegime> regimes, std::span<const double> times,
                                               double tol) {
  VerifyReport rep{"treatment-law", {}};
  CheckResult c{"gcomp.treatment_law_free"};
  c.tolerance = tol;
  for (const auto& g : regimes) {
    if (!is_evaluable(g, a) || !is_evaluable(g, b)) continue;
    for (double t : times)
      c.record(std::abs(s_marginal(a.laws(), g, t) - s_marginal(b.laws(), g, t)), g.name() + " t=" + fmt(t));
  }
  rep.checks.push_back(c);
  return rep;
}

VerifyReport verify_blip_theorems(const EnumeratedWorld& world, const ShiftModel& check, std::span<const double> times,
                                  double tol) {
  VerifyReport rep{"blip", {}};
  CheckResult law{"blip.t0_law"}, indep{"blip.independence"}, tk{"blip.tk_law"};
  law.tolerance = indep.tolerance = tk.tolerance = tol;
  const auto& grid = world.grid();
  const auto& alph = world.alphabets();
  const auto& atoms = world.atoms();
  const auto never = TreatmentRegime::never();

  for (double t : times) {
    double tail = 0.0;
    for (const Atom& at : atoms) tail += world.atom_blip_tail(at, check, 0, t);
    const double s0bar = s_marginal(world.laws(), never, t);
    law.record(std::max(std::abs(tail - s0bar), std::abs(tail - world.bins().baseline().clamped(t))),
               "t=" + fmt(t));
  }

  for (int k = 0; k <= grid.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    for (std::size_t idx = 0; idx < alph.covariate_histories(k); ++idx) {
      const History l = history_from_index(alph, k, idx);
      std::size_t na = 1;
      for (int m = 0; m < k; ++m) na *= static_cast<std::size_t>(alph.treatment[static_cast<std::size_t>(m)]);
      for (std::size_t ai = 0; ai < na; ++ai) {
        History ap(ku);
        for (std::size_t r = ai, m = ku; m-- > 0;) {
          ap[m] = static_cast<int>(r % static_cast<std::size_t>(alph.treatment[m]));
          r /= static_cast<std::size_t>(alph.treatment[m]);
        }
        const double ph = world.history_mass(l, ap);
        if (!(ph > 0.0)) continue;
        const std::string cell = describe_cell(l, ap);

        // P(A_k = a, h) and P(A_k = a, T_j > t, h) from the atoms extending (l, ap, a).
        const int nak = alph.treatment[ku];
        for (double t : times) {
          std::vector<double> joint(static_cast<std::size_t>(nak), 0.0);
          std::vector<double> joint_k(static_cast<std::size_t>(nak), 0.0);
          for (const Atom& at : atoms) {
            if (at.p < k || !is_prefix(l, at.l) || !is_prefix(ap, at.a)) continue;
            const auto ak = static_cast<std::size_t>(at.a[ku]);
            joint[ak] += world.atom_blip_tail(at, check, 0, t);
            if (t > grid.tau(k)) joint_k[ak] += world.atom_blip_tail(at, check, k, t);
          }
          double tail_h = 0.0, tail_hk = 0.0;
          for (int x = 0; x < nak; ++x) {
            tail_h += joint[static_cast<std::size_t>(x)];
            tail_hk += joint_k[static_cast<std::size_t>(x)];
          }
          const TreatmentRegime base = TreatmentRegime::static_doses(ap);
          const double rhs_k = t > grid.tau(k) ? s_conditional(world.laws(), base, l, t) : 0.0;
          if (t > grid.tau(k)) tk.record(std::abs(tail_hk / ph - rhs_k), cell + " t=" + fmt(t));
          for (int x = 0; x < nak; ++x) {
            History af = ap;
            af.push_back(x);
            const double pa = world.history_mass(l, af);
            if (!(pa > 0.0)) continue;
            indep.record(std::abs(joint[static_cast<std::size_t>(x)] * ph - pa * tail_h),
                         cell + " a_k=" + std::to_string(x) + " t=" + fmt(t));
            if (t > grid.tau(k))
              tk.record(std::abs(joint_k[static_cast<std::size_t>(x)] / pa - rhs_k),
                        cell + " a_k=" + std::to_string(x) + " t=" + fmt(t));
          }
        }
      }
    }
  }
  rep.checks = {law, indep, tk};
  return rep;
}

std::pair<TreatmentRegime, TreatmentRegime> witness_regimes(const Alphabets& alphabets, HistoryView l, HistoryView a) {
  const int k = static_cast<int>(l.size()) - 1;
  const int K = static_cast<int>(alphabets.covariate.size()) - 1;
  std::vector<std::vector<int>> d1, d2;
  for (int m = 0; m <= K; ++m) {
    const std::size_t n = alphabets.covariate_histories(m);
    std::vector<int> row1(n, 0), row2(n, 0);
    if (m <= k) {
      const auto mu = static_cast<std::size_t>(m);
      const std::size_t idx = history_index(alphabets, l.first(mu + 1));
      row1[idx] = a[mu];
      if (m < k) row2[idx] = a[mu];
    }
    d1.push_back(std::move(row1));
    d2.push_back(std::move(row2));
  }
  return {TreatmentRegime::table(alphabets, std::move(d1), "witness.g1"),
          TreatmentRegime::table(alphabets, std::move(d2), "witness.g2")};
}

VerifyReport verify_null_equivalence(const EnumeratedWorld& world, std::span<const double> times,
                                     const NullEquivalenceOptions& opt) {
  VerifyReport rep{"null", {}};
  const auto& grid = world.grid();
  const auto& alph = world.alphabets();
  const auto& model = world.config().model;

  // First positive-probability cell in lexicographic order where gamma is not the identity.
  std::optional<std::pair<History, History>> witness_cell;
  for (int k = 0; k <= grid.K() && !witness_cell; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::size_t na = 1;
    for (int m = 0; m <= k; ++m) na *= static_cast<std::size_t>(alph.treatment[static_cast<std::size_t>(m)]);
    for (std::size_t idx = 0; idx < alph.covariate_histories(k) && !witness_cell; ++idx) {
      const History l = history_from_index(alph, k, idx);
      for (std::size_t ai = 0; ai < na; ++ai) {
        History a(ku + 1);
        for (std::size_t r = ai, m = ku + 1; m-- > 0;) {
          a[m] = static_cast<int>(r % static_cast<std::size_t>(alph.treatment[m]));
          r /= static_cast<std::size_t>(alph.treatment[m]);
        }
        if (model.exponent(l, a) != 0.0 && world.history_mass(l, a) > 0.0) {
          witness_cell = std::make_pair(l, a);
          break;
        }
      }
    }
  }

  CheckResult fwd{"null.forward"};
  fwd.tolerance = opt.equal_tol;
  bool truncated = false;
  const auto regimes = enumerate_regimes(grid, alph, opt.regime_cap, opt.seed, &truncated);
  std::vector<const TreatmentRegime*> evaluable;
  for (const auto& g : regimes)
    if (is_evaluable(g, world)) evaluable.push_back(&g);
  fwd.notes.push_back(std::to_string(evaluable.size()) + " of " + std::to_string(regimes.size()) +
                      " enumerated regimes evaluable" + (truncated ? " (seeded random subset)" : ""));
  double spread = 0.0;
  for (double t : times) {
    double lo = kInf, hi = -kInf, slo = kInf, shi = -kInf;
    for (const auto* g : evaluable) {
      const double e = world.exact_survival(*g, t);
      const double s = s_marginal(world.laws(), *g, t);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      slo = std::min(slo, s);
      shi = std::max(shi, s);
    }
    spread = std::max(spread, std::max(hi - lo, shi - slo));
    if (!witness_cell) fwd.record(std::max(hi - lo, shi - slo), "t=" + fmt(t));
  }

  CheckResult wit{"null.witness"};
  if (!witness_cell) {
    fwd.notes.push_back("gamma is the identity on every positive-probability cell");
    wit.skipped = true;
    wit.notes.push_back("no non-identity cell with positive probability");
  } else {
    fwd.skipped = true;
    fwd.worst = spread;
    fwd.notes.push_back("gamma differs from the identity on " +
                        describe_cell(witness_cell->first, witness_cell->second) +
                        "; curves are not expected to coincide (spread " + fmt(spread) + ")");
    const auto [g1, g2] = witness_regimes(alph, witness_cell->first, witness_cell->second);
    wit.notes.push_back("witness cell " + describe_cell(witness_cell->first, witness_cell->second));
    if (!is_evaluable(g1, world) || !is_evaluable(g2, world)) {
      wit.pass = false;
      wit.failures.push_back("witness regimes are not evaluable");
    } else {
      double dev = 0.0;
      for (double t : times) {
        dev = std::max(dev, std::abs(world.exact_survival(g1, t) - world.exact_survival(g2, t)));
        ++wit.evaluations;
      }
      wit.worst = dev;
      wit.tolerance = opt.witness_min;
      wit.pass = dev > opt.witness_min;
      if (!wit.pass) wit.failures.push_back("witness curves differ by only " + fmt(dev));
    }
  }
  rep.checks = {fwd, wit};
  return rep;
}

}  // namespace snftm
