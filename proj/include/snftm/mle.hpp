#pragma once

#include <string>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/dgp.hpp"
#include "snftm/shift.hpp"
#include "snftm/survival.hpp"

namespace snftm {

/// Parametric law of (T0, L-bar) given the shift parameter:
///   T0 ~ piecewise exponential with breaks and log-rates,
///   P(L_k = c | past, T0) = softmax_c(beta . x_k(T0)), category 0 the reference,
///   x_k = [1, k, l_{k-1}, a_{k-1}, 1{bin(T0) = j} for j >= 1, exp(-rho T0) if rho > 0].
struct ParametricModel {
  TimeGrid grid;
  Alphabets alphabets;
  std::vector<std::string> shift_features;
  Vector psi;
  std::vector<double> baseline_breaks;
  Vector log_rates;
  std::vector<double> bins;
  double prognosis_rate = 0.0;
  Matrix covariate_coef;  // (categories - 1) x covariate_dim

  /// Model with psi = 0, unit rates and zero covariate coefficients.
  static ParametricModel initial(TimeGrid grid, Alphabets alphabets, std::vector<std::string> shift_features,
                                 std::vector<double> baseline_breaks, std::vector<double> bins,
                                 double prognosis_rate = 0.0);
  /// The model that reproduces a softmax structural world exactly.
  static ParametricModel from_dgp(const DgpConfig& cfg);

  void validate() const;
  int categories() const { return alphabets.covariate.front(); }
  int covariate_dim() const;
  int psi_dim() const { return static_cast<int>(psi.size()); }
  int size() const;
  Vector pack() const;
  ParametricModel unpack(const Vector& theta) const;
  std::vector<std::string> parameter_names() const;

  ShiftModel shift_model() const;
  SurvivalCurve baseline() const;
  void covariate_features(int k, int l_prev, int a_prev, double t0, double* out) const;
  std::vector<double> covariate_probs(int k, int l_prev, int a_prev, double t0) const;
};

struct LogDensityTerms {
  double t0 = 0.0;
  double jacobian = 0.0;   // log d t0 / d T
  double baseline = 0.0;   // log f_{T0}(t0)
  double covariates = 0.0; // sum_k log P(L_k | past, t0)
  double total() const { return jacobian + baseline + covariates; }
};

LogDensityTerms log_density_terms(const ParametricModel& model, const Trajectory& traj);

/// Log joint density of (L-bar, T) given the treatments, treatment factors
/// omitted.
double log_density(const ParametricModel& model, const Trajectory& traj);

double log_likelihood(const Cohort& cohort, const ParametricModel& model, int threads = 1);
/// Analytic gradient of the log-likelihood in pack() order.
Vector log_likelihood_gradient(const Cohort& cohort, const ParametricModel& model, int threads = 1);

struct MleOptions {
  int threads = 1;
  double grad_tol = 1e-8;
  int max_newton = 100;
  int max_simplex_evals = 2000;
  /// Keep psi at the initial value and fit the remaining parameters only.
  bool fix_psi = false;
};

struct MleFit {
  ParametricModel model;
  double loglik = 0.0;
  Vector gradient;     // full, pack() order
  Matrix information;  // observed information over all parameters
  Matrix covariance;   // inverse information over the free parameters, zero elsewhere
  Vector se;
  bool psi_fixed = false;
  int newton_iterations = 0;
  int simplex_evals = 0;
};

MleFit fit_mle(const Cohort& cohort, const ParametricModel& init, const MleOptions& opt = {});

struct NullTestReport {
  int df = 0;
  double wald = 0.0;
  double wald_p = 1.0;
  double score = 0.0;
  double score_p = 1.0;
  double lr = 0.0;
  double lr_p = 1.0;
};

/// Wald, score and likelihood-ratio tests of psi = 0 from the unrestricted
/// fit and the fit with psi held at 0.
NullTestReport test_null(const MleFit& full, const MleFit& restricted);

}  // namespace snftm
