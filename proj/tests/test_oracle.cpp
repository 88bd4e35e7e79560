#include <doctest.h>

#include <cmath>

#include "snftm/gcomp.hpp"
#include "snftm/oracle.hpp"
#include "support/fixtures.hpp"

using namespace snftm;

namespace {

DgpConfig perturbed_treatment(DgpConfig cfg) {
  SoftmaxLaw trt = *cfg.treatment_law.softmax();
  trt.scores[0].intercept += 0.7;
  trt.scores[0].covariate -= 0.5;
  cfg.treatment_law = CategoricalLaw(trt);
  return cfg;
}

}  // namespace

TEST_CASE("atom masses sum to one") {
  for (const auto& psi : {Vector(Vector::Zero(3)), fixtures::effect()}) {
    const EnumeratedWorld world(fixtures::example_dgp(psi));
    double total = 0.0;
    for (const auto& atom : world.atoms()) total += world.atom_mass(atom);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("never treating reproduces the baseline") {
  const EnumeratedWorld world(fixtures::example_dgp(fixtures::effect()));
  const auto& base = world.config().baseline;
  for (double t : oracle_time_grid(world.grid(), 30))
    CHECK(world.exact_survival(TreatmentRegime::never(), t) == doctest::Approx(base.survival(t)).epsilon(1e-12));
  CHECK(world.exact_mean(TreatmentRegime::never()) == doctest::Approx(base.mean()).epsilon(1e-12));
}

TEST_CASE("no effect gives one curve for every regime") {
  const EnumeratedWorld world(fixtures::example_dgp());
  const auto regimes = enumerate_regimes(world.grid(), world.alphabets(), 64, 1);
  for (double t : oracle_time_grid(world.grid(), 15)) {
    const double ref = world.exact_survival(TreatmentRegime::never(), t);
    for (const auto& g : regimes) CHECK(std::abs(world.exact_survival(g, t) - ref) < 1e-13);
  }
}

TEST_CASE("hand-derived mixture for treatment at the second visit only") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const EnumeratedWorld world(cfg);
  const PrognosisBins bins = cfg.bins();
  // Dose 0 at visit 0; at visit 1 treat iff l_1 = 1.
  const auto g = TreatmentRegime::table(cfg.alphabets, {{0, 0}, {0, 1, 0, 1}}, "late");
  const double scale = std::exp(0.7);
  for (double t : {0.4, 1.0, 1.3, 2.0, 3.5}) {
    double expect = 0.0;
    if (t <= 1.0) {
      expect = cfg.baseline.survival(t);
    } else {
      for (int j = 0; j < bins.count(); ++j)
        for (int l0 = 0; l0 < 2; ++l0) {
          const double p0 = covariate_probs(cfg, 0, j, History{}, History{})[static_cast<std::size_t>(l0)];
          const auto p1 = covariate_probs(cfg, 1, j, History{l0}, History{0});
          expect += p0 * (p1[0] * bins.tail(j, t) + p1[1] * bins.tail(j, 1.0 + (t - 1.0) * scale));
        }
    }
    CHECK(world.exact_survival(g, t) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("verification suites pass on the true world") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const EnumeratedWorld world(cfg);
  const auto times = oracle_time_grid(world.grid());
  const auto regimes = enumerate_regimes(world.grid(), world.alphabets(), 64, 1);
  CHECK(verify_gcomputation(world, regimes, times).pass());
  CHECK(verify_blip_theorems(world, cfg.model, times).pass());
  const EnumeratedWorld other(perturbed_treatment(cfg));
  CHECK(verify_treatment_law_independence(world, other, regimes, times).pass());

  const VerifyReport null_rep = verify_null_equivalence(world, times);
  CHECK(null_rep.pass());
  CHECK(null_rep.find("null.forward")->skipped);
  CHECK(null_rep.find("null.witness")->worst > 1e-3);

  const VerifyReport flat = verify_null_equivalence(EnumeratedWorld(fixtures::example_dgp()), times);
  CHECK(flat.pass());
  CHECK(flat.find("null.witness")->skipped);
  CHECK(flat.find("null.forward")->worst < 1e-12);
}

TEST_CASE("a wrong shift parameter breaks the blip identities") {
  const DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  const EnumeratedWorld world(cfg);
  const auto times = oracle_time_grid(world.grid());
  const Vector wrong = (Vector(3) << 0.3, 0.0, 0.0).finished();
  const VerifyReport rep = verify_blip_theorems(world, cfg.model.with_psi(wrong), times);
  CHECK_FALSE(rep.pass());
  CHECK_FALSE(rep.find("blip.independence")->pass);
}

TEST_CASE("non-evaluable regimes are skipped") {
  DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  for (int a0 : {0, 1}) cfg.treatment_law.set({1, -1, {1, 1}, {a0}}, {1.0, 0.0});
  const EnumeratedWorld world(cfg);
  const std::vector<TreatmentRegime> regimes{TreatmentRegime::never(), TreatmentRegime::threshold(1, 1)};
  const VerifyReport rep = verify_gcomputation(world, regimes, oracle_time_grid(world.grid()));
  CHECK(rep.pass());
  const auto* eval = rep.find("gcomp.evaluability");
  REQUIRE(eval != nullptr);
  CHECK(eval->notes.front().rfind("1 of 2", 0) == 0);
}

TEST_CASE("identity on the support without positivity") {
  // Treatment is never given: gamma is the identity on every positive cell
  // although psi is not zero, and only the never regime is evaluable.
  DgpConfig cfg = fixtures::example_dgp(fixtures::effect());
  CategoricalLaw none;
  for (int k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < cfg.alphabets.covariate_histories(k); ++i) {
      const History l = history_from_index(cfg.alphabets, k, i);
      if (k == 0) {
        none.set({0, -1, l, {}}, {1.0, 0.0});
      } else {
        for (int a0 : {0, 1}) none.set({1, -1, l, {a0}}, {1.0, 0.0});
      }
    }
  cfg.treatment_law = none;
  const EnumeratedWorld world(cfg);
  const VerifyReport rep = verify_null_equivalence(world, oracle_time_grid(world.grid()));
  CHECK(rep.pass());
  CHECK(rep.find("null.witness")->skipped);
  CHECK(rep.find("null.forward")->notes.front().rfind("1 of ", 0) == 0);
}

TEST_CASE("witness regimes") {
  const auto alph = Alphabets::uniform(TimeGrid({0.0, 1.0}), 2, 2);
  const auto [g1, g2] = witness_regimes(alph, History{1, 0}, History{0, 1});
  CHECK(g1.dose(0, History{1}) == 0);
  CHECK(g1.dose(1, History{1, 0}) == 1);
  CHECK(g1.dose(1, History{1, 1}) == 0);
  CHECK(g2.dose(1, History{1, 0}) == 0);
}
