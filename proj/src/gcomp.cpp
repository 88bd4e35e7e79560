#include "snftm/gcomp.hpp"

#include <cmath>
#include <map>

#include "snftm/parallel.hpp"
#include "snftm/rng.hpp"
#include "snftm/stats.hpp"

namespace snftm {

namespace {

// l holds l_0..l_k; a is scratch for g-bar_k(l-bar_k).
double recurse(const ConditionalLaws& laws, const TreatmentRegime& g, History& l, History& a, int p, double t) {
  const int k = static_cast<int>(l.size()) - 1;
  a.push_back(g.dose(k, l));
  const IntervalSurvival& s = laws.survival(l, a);
  double out;
  if (k == p) {
    out = s(t);
  } else {
    const auto& pl = laws.covariate(l, a);
    double sum = 0.0;
    for (std::size_t c = 0; c < pl.size(); ++c) {
      if (!(pl[c] > 0.0)) continue;
      l.push_back(static_cast<int>(c));
      sum += pl[c] * recurse(laws, g, l, a, p, t);
      l.pop_back();
    }
    out = s.at_end() * sum;
  }
  a.pop_back();
  return out;
}

}  // namespace

double s_conditional(const ConditionalLaws& laws, const TreatmentRegime& g, HistoryView l, double t) {
  const auto& grid = laws.grid();
  if (l.empty() || static_cast<int>(l.size()) > grid.K() + 1) throw GridBoundsError("s_conditional: bad history length");
  const int k = static_cast<int>(l.size()) - 1;
  if (!(t > grid.tau(k))) throw DomainError("s_conditional: t must exceed tau_k");
  const int p = grid.interval_index(t);
  History lh(l.begin(), l.end());
  History a = apply_regime(g, grid, l.first(static_cast<std::size_t>(k)));
  if (!laws.has_covariate(l.first(static_cast<std::size_t>(k)), a))
    throw UndefinedCell("conditioning history outside the support: " +
                        describe_cell(l.first(static_cast<std::size_t>(k)), a));
  return recurse(laws, g, lh, a, p, t);
}

double s_marginal(const ConditionalLaws& laws, const TreatmentRegime& g, double t) {
  const int p = laws.grid().interval_index(t);
  const auto& p0 = laws.covariate({}, {});
  History l, a;
  double sum = 0.0;
  for (std::size_t c = 0; c < p0.size(); ++c) {
    if (!(p0[c] > 0.0)) continue;
    l.assign(1, static_cast<int>(c));
    sum += p0[c] * recurse(laws, g, l, a, p, t);
  }
  return sum;
}

ConditionalLaws estimate_laws(const Cohort& cohort) {
  if (cohort.subjects.empty()) throw DomainError("estimate_laws: empty cohort");
  cohort.validate();
  const auto& grid = cohort.grid;
  std::map<HistoryKey, std::vector<double>> counts;
  std::map<HistoryKey, std::pair<double, double>> exposure;  // events, person-time
  for (const auto& s : cohort.subjects) {
    const int p = s.last_visit();
    for (int k = 0; k <= p; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      HistoryKey prev{History(s.covariates.begin(), s.covariates.begin() + k),
                      History(s.treatments.begin(), s.treatments.begin() + k)};
      auto& c = counts[prev];
      c.resize(static_cast<std::size_t>(cohort.alphabets.covariate[ku]), 0.0);
      c[static_cast<std::size_t>(s.covariates[ku])] += 1.0;
      HistoryKey cur{History(s.covariates.begin(), s.covariates.begin() + k + 1),
                     History(s.treatments.begin(), s.treatments.begin() + k + 1)};
      auto& e = exposure[cur];
      e.first += k == p ? 1.0 : 0.0;
      e.second += std::min(s.event_time, grid.interval_end(k)) - grid.tau(k);
    }
  }
  ConditionalLaws laws(grid, cohort.alphabets);
  for (auto& [key, c] : counts) {
    double n = 0.0;
    for (double v : c) n += v;
    for (double& v : c) v /= n;
    laws.set_covariate(key.l, key.a, c);
  }
  for (const auto& [key, e] : exposure) {
    const int k = static_cast<int>(key.l.size()) - 1;
    laws.set_survival(key.l, key.a, IntervalSurvival::exponential(grid.tau(k), grid.interval_end(k), e.first / e.second));
  }
  return laws;
}

CurveEstimate empirical_curve(std::span<const double> sample, std::span<const double> t_grid) {
  CurveEstimate out;
  out.draws = sample.size();
  out.times.assign(t_grid.begin(), t_grid.end());
  const double n = static_cast<double>(sample.size());
  for (double t : t_grid) {
    double alive = 0.0;
    for (double x : sample) alive += x > t ? 1.0 : 0.0;
    const double p = alive / n;
    out.survival.push_back(p);
    out.stderr_.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  out.mean = mean_of(sample);
  out.mean_se = sd_of(sample) / std::sqrt(n);
  return out;
}

CurveEstimate mc_gcomp(const ConditionalLaws& laws, const TreatmentRegime& g, std::span<const double> t_grid,
                       std::size_t n_sim, std::uint64_t seed, int threads) {
  if (n_sim < 1) throw DomainError("mc_gcomp: n_sim must be >= 1");
  const auto& grid = laws.grid();
  std::vector<double> times(n_sim);
  parallel_chunks(n_sim, threads, [&](std::size_t lo, std::size_t hi) {
    History l, a;
    for (std::size_t i = lo; i < hi; ++i) {
      RandomStream rng(seed, stream_id("gcomp.replicate"), i);
      l.clear();
      a.clear();
      double t = 0.0;
      for (int k = 0; k <= grid.K(); ++k) {
        l.push_back(rng.categorical(laws.covariate(l, a)));
        a.push_back(g.dose(k, l));
        const IntervalSurvival& s = laws.survival(l, a);
        const double u = rng.uniform();
        if (k < grid.K() && u < s.at_end()) continue;
        t = s.quantile(u);
        break;
      }
      times[i] = t;
    }
  });
  return empirical_curve(times, t_grid);
}

}  // namespace snftm
