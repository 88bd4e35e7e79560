#pragma once

#include "snftm/dgp.hpp"

namespace fixtures {

using namespace snftm;

/// Two visits (tau = 0, 1), binary L and A, two-piece baseline, three
/// prognosis bins. Covariates react to prognosis, treatment to covariates.
inline DgpConfig example_dgp(Vector psi = Vector::Zero(3)) {
  TimeGrid grid({0.0, 1.0});
  Alphabets alph = Alphabets::uniform(grid, 2, 2);
  SurvivalCurve baseline(0.0, {1.0}, {0.5, 0.8});
  SoftmaxLaw cov;
  LinearScore c;
  c.intercept = -0.3;
  c.bin = {1.2, 0.0, -1.0};
  c.prev_covariate = 0.8;
  c.prev_treatment = -0.5;
  cov.scores = {c};
  SoftmaxLaw trt;
  LinearScore t;
  t.intercept = -0.5;
  t.covariate = 1.2;
  t.prev_treatment = 1.0;
  trt.scores = {t};
  DgpConfig cfg{grid, alph, baseline, {0.8, 2.0}, CategoricalLaw(cov), CategoricalLaw(trt),
                ShiftModel(grid, psi), kDefaultSeed};
  cfg.validate();
  return cfg;
}

inline Vector effect() { return Vector::Map(std::vector<double>{0.7, 0.0, 0.0}.data(), 3); }

/// One-parameter shift model (feature "a" only).
inline ShiftModel one_parameter(const TimeGrid& grid, double psi) {
  return ShiftModel(grid, Vector::Constant(1, psi), std::vector<std::string>{"a"});
}

/// Same structure with covariates driven by exp(-0.6 T0) instead of bins and
/// a single-rate baseline: the shape the parametric likelihood fits exactly.
inline DgpConfig smooth_dgp(Vector psi = Vector::Zero(3)) {
  TimeGrid grid({0.0, 1.0});
  Alphabets alph = Alphabets::uniform(grid, 2, 2);
  SoftmaxLaw cov;
  cov.prognosis_rate = 0.6;
  LinearScore c;
  c.intercept = -1.0;
  c.prognosis = 2.0;
  c.prev_covariate = 0.8;
  c.prev_treatment = -0.5;
  cov.scores = {c};
  SoftmaxLaw trt;
  LinearScore t;
  t.intercept = -0.5;
  t.covariate = 1.2;
  t.prev_treatment = 1.0;
  trt.scores = {t};
  DgpConfig cfg{grid, alph, SurvivalCurve::exponential(0.5), {}, CategoricalLaw(cov), CategoricalLaw(trt),
                ShiftModel(grid, psi), kDefaultSeed};
  cfg.validate();
  return cfg;
}

}  // namespace fixtures
