#include <doctest.h>

#include <cmath>
#include <map>

#include "snftm/dgp.hpp"
#include "snftm/stats.hpp"
#include "support/fixtures.hpp"

using namespace snftm;

TEST_CASE("sampling is deterministic across thread counts") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const Cohort a = sample_cohort(cfg, 3000, 1);
  const Cohort b = sample_cohort(cfg, 3000, 4);
  const Cohort c = sample_cohort(cfg, 3000, 7);
  CHECK(a.subjects == b.subjects);
  CHECK(a.subjects == c.subjects);
  CHECK_FALSE(sample_cohort(cfg.with_seed(cfg.seed + 1), 3000, 1).subjects == a.subjects);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("configuration errors") {
  DgpConfig cfg = fixtures::example_dgp();
  cfg.thresholds = {2.0, 0.8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = fixtures::example_dgp();
  cfg.alphabets.covariate = {3, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = fixtures::example_dgp();
  CHECK_THROWS_AS(cfg.with_psi(Vector::Zero(2)), ConfigError);
  CategoricalLaw law;
  CHECK_THROWS_AS(law.probs(0, 0, History{}, History{}), UndefinedCell);
  CHECK_THROWS_AS(law.set({0, -1, {}, {}}, {0.5, 0.6}), ConfigError);
}

TEST_CASE("blipping down a sampled record recovers its T0") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const auto draws = sample_subjects(cfg, 5000, 2);
  double worst = 0.0;
  for (const auto& d : draws)
    worst = std::max(worst, std::abs(blip_down(cfg.model, d.trajectory, 0) - d.t0) / d.t0);
  CHECK(worst < 1e-12);
}

TEST_CASE("T0 follows the baseline law") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const auto draws = sample_subjects(cfg, 20000, 4);
  std::vector<double> t0;
  for (const auto& d : draws) t0.push_back(d.t0);
  const double ks = ks_distance(t0, [&](double t) { return 1.0 - cfg.baseline.survival(t); });
  CHECK(ks < 1.63 / std::sqrt(20000.0));
}

TEST_CASE("observed frequencies match the exact conditional laws") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const ConditionalLaws laws = true_conditional_laws(cfg);
  const Cohort cohort = sample_cohort(cfg, 40000, 4);

  // Covariate transitions: count at-risk histories and L_k outcomes.
  std::map<HistoryKey, std::pair<double, double>> cov;
  // Survival to the end of the interval among those at risk at its start.
  std::map<HistoryKey, std::pair<double, double>> surv;
  for (const auto& s : cohort.subjects) {
    for (int k = 0; k <= s.last_visit(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      HistoryKey prev{History(s.covariates.begin(), s.covariates.begin() + k),
                      History(s.treatments.begin(), s.treatments.begin() + k)};
      auto& c = cov[prev];
      c.first += 1;
      c.second += s.covariates[ku];
      HistoryKey cur{History(s.covariates.begin(), s.covariates.begin() + k + 1),
                     History(s.treatments.begin(), s.treatments.begin() + k + 1)};
      auto& v = surv[cur];
      v.first += 1;
      v.second += (s.event_time > cfg.grid.interval_end(k)) ? 1.0 : 0.0;
    }
  }
  int checked = 0;
  for (const auto& [key, c] : cov) {
    if (c.first < 500) continue;
    const double p = laws.covariate(key.l, key.a)[1];
    CHECK(std::abs(c.second / c.first - p) < 4.5 * std::sqrt(p * (1 - p) / c.first));
    ++checked;
  }
  for (const auto& [key, v] : surv) {
    const int k = static_cast<int>(key.l.size()) - 1;
    if (v.first < 500 || k == cfg.grid.K()) continue;
    const double p = laws.survival(key.l, key.a).at_end();
    CHECK(std::abs(v.second / v.first - p) < 4.5 * std::sqrt(p * (1 - p) / v.first));
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("pushing a bin mixture through a scaled interval matches simulation") {
  const DgpConfig cfg = fixtures::example_dgp();
  const PrognosisBins bins = cfg.bins();
  const std::vector<double> w{0.2, 0.5, 0.3};
  const double thr = 0.4, slope = 0.5, tau = 1.0, end = 3.0;
  const IntervalSurvival s = bins.push_through(w, thr, slope, tau, end);
  // Monte Carlo: T0 from the bin mixture conditioned on T0 > thr.
  RandomStream rng(3, stream_id("test.push"), 0);
  std::vector<double> t;
  while (t.size() < 40000) {
    const double t0 = cfg.baseline.quantile(rng.uniform());
    if (t0 <= thr) continue;
    if (rng.uniform() >= w[static_cast<std::size_t>(bins.bin_of(t0))] / 0.5) continue;
    t.push_back(tau + (t0 - thr) / slope);
  }
  for (double x : {1.2, 1.6, 2.0, 2.9}) {
    double frac = 0.0;
    for (double v : t) frac += v > x;
    frac /= static_cast<double>(t.size());
    CHECK(std::abs(frac - s(x)) < 4.5 * std::sqrt(s(x) * (1 - s(x)) / t.size()) + 1e-12);
  }
}
