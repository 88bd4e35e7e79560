#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/shift.hpp"

namespace snftm {

/// Pooled logistic treatment model
///   logit P(A_k = 1 | past, T > tau_k) = theta . f_k + alpha . g_k(T0),
/// with g_k(T0) = h(clip(T0, clip_lo, clip_hi)) times each history term.
struct TreatmentModelSpec {
  /// Any of "intercept", "k", "l", "l_prev", "a_prev".
  std::vector<std::string> f_features{"intercept", "k", "l", "l_prev", "a_prev"};
  /// "identity" or "log".
  std::string g_transform = "identity";
  double clip_lo = 0.0;
  double clip_hi = 20.0;
  /// Multipliers of the transformed time, any of "1", "k", "l", "a_prev".
  std::vector<std::string> g_terms{"1"};

  int theta_dim() const { return static_cast<int>(f_features.size()); }
  int alpha_dim() const { return static_cast<int>(g_terms.size()); }
  void validate() const;
  double transform(double t0) const;
};

struct LogisticFit {
  Vector coef;
  Matrix covariance;  // inverse observed information
  double loglik = 0.0;
  int iterations = 0;
};

/// Newton-Raphson maximum likelihood for a binary logistic regression.
/// Converges when the max-norm of the score drops below tol.
LogisticFit fit_logistic(const Matrix& x, const Vector& y, double tol = 1e-10, int max_iter = 100);

struct TreatmentFit {
  Vector theta;
  Vector alpha;
  Matrix covariance;  // over (theta, alpha)
  double loglik = 0.0;
  int records = 0;
};

struct GTestReport {
  Vector alpha;
  Vector alpha_se;
  double wald = 0.0;
  double wald_p = 1.0;
  double score = 0.0;
  double score_p = 1.0;
  int df = 0;
  int records = 0;
};

/// Person-interval design of a cohort: one record per (i, k) with T_i > tau_k.
class GEstimation {
 public:
  /// Time axis given by blip-down under `model` (its psi is ignored).
  GEstimation(const Cohort& cohort, TreatmentModelSpec spec, const ShiftModel& model);
  /// Time axis given by the raw event times; no shift function is involved.
  GEstimation(const Cohort& cohort, TreatmentModelSpec spec);

  const TreatmentModelSpec& spec() const { return spec_; }
  std::size_t subjects() const { return subject_time_.size(); }
  std::size_t records() const { return static_cast<std::size_t>(y_.size()); }
  int psi_dim() const;
  /// Fit of A_k on f_k alone; free of psi.
  const LogisticFit& restricted() const { return restricted_; }

  /// T0^{gamma_psi} for every subject (raw T for the G-null design).
  std::vector<double> blipped_times(const Vector& psi) const;
  /// Score of alpha at (theta-restricted, alpha = 0).
  Vector score(const Vector& psi) const;
  /// Score statistic U' V^{-1} U with V the efficient information for alpha.
  double score_statistic(const Vector& psi) const;
  /// Per-subject estimating function h_i = sum_k (A - p)(g - Gamma f).
  Matrix contributions(const Vector& psi) const;
  TreatmentFit fit(const Vector& psi) const;
  GTestReport test(const Vector& psi) const;

 private:
  void build(const Cohort& cohort);
  Matrix g_design(const std::vector<double>& t0) const;
  struct Parts {
    Vector u;
    Matrix v;
    Matrix gamma;
    Matrix g;
  };
  Parts parts(const Vector& psi) const;

  TreatmentModelSpec spec_;
  std::optional<std::vector<RecordBlip>> blips_;
  std::vector<double> subject_time_;
  std::vector<std::size_t> subject_;
  Matrix f_;
  Matrix terms_;
  Vector y_;
  LogisticFit restricted_;
  Vector p_;
};

TreatmentFit fit_treatment_model(const Cohort& cohort, const TreatmentModelSpec& spec, const ShiftModel& model);

/// Test of alpha = 0 with T0 = blip-down of T under the candidate model.
GTestReport g_test(const Cohort& cohort, const TreatmentModelSpec& spec, const ShiftModel& candidate);

/// G-null test: alpha = 0 with g applied to the observed T.
GTestReport g_null_test(const Cohort& cohort, const TreatmentModelSpec& spec);

struct SearchBox {
  std::vector<std::pair<double, double>> ranges;
  int dim() const { return static_cast<int>(ranges.size()); }
};

struct EstimateOptions {
  double pitch = 0.01;
  double root_tol = 1e-6;
  double level = 0.05;
  double fd_step = 1e-4;
  /// Grid points per coordinate are capped so vector searches stay tractable.
  int max_points_per_dim = 41;
  bool trace = false;
  int threads = 1;
};

struct SandwichResult {
  Matrix variance;  // of psi-hat
  Vector se;
  Matrix derivative;
  Matrix meat;
  Vector mean_h;
};

struct PsiEstimate {
  Vector psi;
  std::vector<Vector> roots;
  bool multiple_roots = false;
  Vector alpha_at_psi;
  SandwichResult sandwich;
  /// Confidence set as a mask over the inversion grid.
  std::vector<Vector> grid;
  std::vector<double> grid_p;
  std::vector<bool> accepted;
  std::vector<std::pair<double, double>> ci;  // per-coordinate hull of accepted points
  bool ci_touches_box = false;
  /// alpha-hat along the grid when requested.
  std::vector<Vector> alpha_trace;
};

SandwichResult sandwich_variance(const GEstimation& est, const Vector& psi, double fd_step = 1e-4);

PsiEstimate estimate_psi(const GEstimation& est, const SearchBox& box, const EstimateOptions& opt = {});

}  // namespace snftm
