#pragma once

#include <functional>
#include <string>
#include <vector>

#include "snftm/core.hpp"

namespace snftm {

/// Map (k, l_0..l_k, a_0..a_k) -> feature vector whose inner product with psi
/// is the log time-scale of the last treatment blip.
using ShiftFeatures = std::function<Vector(int k, HistoryView l, HistoryView a)>;

/// Names understood by shift_features(): "a" (a_k), "a_aprev" (a_k a_{k-1}),
/// "a_l" (a_k l_k). The default model uses all three, in that order.
const std::vector<std::string>& default_shift_feature_names();
ShiftFeatures shift_features(const std::vector<std::string>& names);

/// SNFTM shift functions gamma^psi.
///
/// For visit k with tau_{k+1} the next visit (inf after the last one) and
/// x = psi . features(k, l-bar_k, a-bar_k):
///
///   gamma(t) = tau_k + (min(tau_{k+1}, t) - tau_k) e^x + (t - tau_{k+1})_+
///
/// a continuous increasing bijection of (tau_k, inf), linear with slope e^x on
/// the visit interval and slope 1 beyond it. psi = 0 gives the identity.
class ShiftModel {
 public:
  ShiftModel(TimeGrid grid, Vector psi, std::vector<std::string> feature_names = default_shift_feature_names());
  ShiftModel(TimeGrid grid, Vector psi, ShiftFeatures features, std::vector<std::string> feature_names);

  const TimeGrid& grid() const { return grid_; }
  const Vector& psi() const { return psi_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  int dim() const { return static_cast<int>(psi_.size()); }
  bool is_identity() const { return psi_.isZero(0.0); }
  ShiftModel with_psi(Vector psi) const;

  /// Histories passed to the per-visit functions are l_0..l_k and a_0..a_k.
  Vector features(HistoryView l, HistoryView a) const;
  double exponent(HistoryView l, HistoryView a) const;
  double gamma(HistoryView l, HistoryView a, double t) const;
  double gamma_inv(HistoryView l, HistoryView a, double y) const;
  /// e^x on (tau_k, tau_{k+1}], 1 beyond.
  double gamma_deriv(HistoryView l, HistoryView a, double t) const;
  /// d gamma(t) / d psi at fixed t.
  Vector gamma_dpsi(HistoryView l, HistoryView a, double t) const;

 private:
  int visit_of(HistoryView l, HistoryView a) const;
  void check_domain(int k, double t) const;

  TimeGrid grid_;
  Vector psi_;
  ShiftFeatures features_;
  std::vector<std::string> names_;
};

/// T_k = gamma_k o ... o gamma_{p(t)}(t) along the given histories, which must
/// cover visits 0..p(t). Returns t unchanged when upto > p(t).
double blip_down(const ShiftModel& model, HistoryView l, HistoryView a, double t, int upto = 0);
double blip_down(const ShiftModel& model, const Trajectory& traj, int upto = 0);

/// Derivative of blip_down(.., t, 0) in t (product of gamma_deriv along the chain).
double blip_down_deriv(const ShiftModel& model, HistoryView l, HistoryView a, double t);
/// Derivative of blip_down(.., t, 0) in psi.
Vector blip_down_dpsi(const ShiftModel& model, HistoryView l, HistoryView a, double t);

/// Applies gamma_0^{-1}, gamma_1^{-1}, ... to t0 and stops at the first visit
/// whose interval holds the candidate time. Throws InsufficientHistory when the
/// histories run out first.
double blip_up(const ShiftModel& model, double t0, HistoryView l, HistoryView a);

/// Value of blip_down(.., tau_k, 0): the T0 level below which a subject with
/// this history (visits 0..k-1) dies before tau_k. Zero for k = 0.
double survival_threshold(const ShiftModel& model, HistoryView l, HistoryView a, int k);

/// Feature rows of one record, cached for repeated blip-downs at many psi:
/// t0(psi) = sum_m w_m exp(psi . f_m), w_m the time spent in interval m.
class RecordBlip {
 public:
  RecordBlip(const ShiftModel& model, const Trajectory& traj);

  int last_visit() const { return static_cast<int>(features_.rows()) - 1; }
  const Matrix& features() const { return features_; }
  double t0(const Vector& psi) const;
  Vector dt0_dpsi(const Vector& psi) const;
  /// log of d t0 / d T, i.e. psi . f_p.
  double log_jacobian(const Vector& psi) const { return features_.row(features_.rows() - 1).dot(psi); }

 private:
  Matrix features_;
  Vector widths_;
};

}  // namespace snftm
