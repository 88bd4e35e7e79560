#include <doctest.h>

#include <cmath>

#include "snftm/cfsim.hpp"
#include "snftm/oracle.hpp"
#include "snftm/stats.hpp"
#include "support/fixtures.hpp"

using namespace snftm;

TEST_CASE("never treating samples the baseline") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const FittedWorld world = FittedWorld::from_dgp(cfg);
  const std::vector<double> times{0.5, 1.5};
  const auto s = simulate_counterfactual(world, TreatmentRegime::never(), 20000, times, 5, 4);
  std::vector<double> t;
  for (const auto& p : s.paths) t.push_back(p.event_time);
  CHECK(ks_distance(t, [&](double x) { return 1.0 - cfg.baseline.survival(x); }) < 1.63 / std::sqrt(20000.0));
}

TEST_CASE("paths blip back to their T0") {
  const DgpConfig cfg = fixtures::example_dgp((Vector(3) << 0.7, -0.3, 0.2).finished());
  const FittedWorld world = FittedWorld::from_dgp(cfg);
  const std::vector<double> times{1.0};
  const auto s = simulate_counterfactual(world, TreatmentRegime::threshold(1, 1), 5000, times, 6, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.paths.size(); ++i) {
    CHECK(s.paths[i].treatments == apply_regime(TreatmentRegime::threshold(1, 1), cfg.grid, s.paths[i].covariates));
    worst = std::max(worst, std::abs(blip_down(cfg.model, s.paths[i], 0) - s.t0[i]) / s.t0[i]);
  }
  CHECK(worst < 1e-12);

  const FittedWorld flat = FittedWorld::from_dgp(fixtures::example_dgp());
  const auto z = simulate_counterfactual(flat, TreatmentRegime::static_doses({1, 1}), 2000, times, 6, 2);
  for (std::size_t i = 0; i < z.paths.size(); ++i) CHECK(z.paths[i].event_time == z.t0[i]);
}

TEST_CASE("agreement with the exact counterfactual law") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const EnumeratedWorld exact(cfg);
  const FittedWorld world = FittedWorld::from_dgp(cfg);
  const auto times = oracle_time_grid(cfg.grid, 10);
  for (const auto& g : {TreatmentRegime::static_doses({1, 1}), TreatmentRegime::threshold(1, 1)}) {
    const auto s = simulate_counterfactual(world, g, 100000, times, 7, 4);
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(std::abs(s.curve.survival[i] - exact.exact_survival(g, times[i])) < 4.0 * s.curve.stderr_[i] + 1e-12);
    CHECK(std::abs(s.curve.mean - exact.exact_mean(g)) < 4.0 * s.curve.mean_se);
  }
}

TEST_CASE("sampling is deterministic across thread counts") {
  const FittedWorld world = FittedWorld::from_dgp(fixtures::example_dgp(fixtures::effect()));
  const std::vector<double> times{1.0, 2.0};
  const auto a = simulate_counterfactual(world, TreatmentRegime::threshold(1, 1), 3000, times, 8, 1);
  const auto b = simulate_counterfactual(world, TreatmentRegime::threshold(1, 1), 3000, times, 8, 6);
  CHECK(a.paths == b.paths);
  CHECK(a.t0 == b.t0);
  CHECK(a.curve.survival == b.curve.survival);
}

TEST_CASE("world fitted to a cohort") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const Cohort cohort = sample_cohort(cfg, 20000, 4);
  const FittedWorld world = FittedWorld::from_cohort(cohort, cfg.model, cfg.thresholds);
  CHECK_NOTHROW(world.validate());
  CHECK(world.baseline_sample.size() == cohort.subjects.size());
  CHECK(std::is_sorted(world.baseline_sample.begin(), world.baseline_sample.end()));
  const EnumeratedWorld exact(cfg);
  const std::vector<double> times{0.5, 1.0, 2.0};
  for (const auto& g : {TreatmentRegime::never(), TreatmentRegime::threshold(1, 1)}) {
    const auto s = simulate_counterfactual(world, g, 20000, times, 9, 4);
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(std::abs(s.curve.survival[i] - exact.exact_survival(g, times[i])) < 0.03);
  }
}

TEST_CASE("an unobserved covariate cell is reported") {
  const TimeGrid grid({0.0, 1.0});
  const Cohort one{grid, Alphabets::uniform(grid, 2, 2), {{{0, 0}, {0, 0}, 2.0}}};
  const FittedWorld world = FittedWorld::from_cohort(one, fixtures::one_parameter(grid, 0.0), {});
  const std::vector<double> times{1.0};
  CHECK_NOTHROW(simulate_counterfactual(world, TreatmentRegime::never(), 10, times, 1, 1));
  CHECK_THROWS_AS(simulate_counterfactual(world, TreatmentRegime::static_doses({1, 1}), 10, times, 1, 1),
                  UndefinedCell);
  CHECK_THROWS_AS(simulate_counterfactual(world, TreatmentRegime::never(), 0, times, 1, 1), DomainError);
  CHECK_THROWS_AS(FittedWorld::from_cohort(one, fixtures::one_parameter(grid, 0.0), {2.0, 1.0}), ConfigError);
}
