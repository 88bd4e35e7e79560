#include "snftm/shift.hpp"

#include <algorithm>
#include <cmath>

namespace snftm {

const std::vector<std::string>& default_shift_feature_names() {
  static const std::vector<std::string> names{"a", "a_aprev", "a_l"};
  return names;
}

ShiftFeatures shift_features(const std::vector<std::string>& names) {
  enum class F { a, a_aprev, a_l };
  std::vector<F> kinds;
  for (const auto& n : names) {
    if (n == "a") kinds.push_back(F::a);
    else if (n == "a_aprev") kinds.push_back(F::a_aprev);
    else if (n == "a_l") kinds.push_back(F::a_l);
    else throw ConfigError("unknown shift feature '" + n + "'");
  }
  return [kinds](int k, HistoryView l, HistoryView a) {
    const auto ku = static_cast<std::size_t>(k);
    const double ak = a[ku];
    const double aprev = k > 0 ? a[ku - 1] : 0.0;
    Vector f(static_cast<Eigen::Index>(kinds.size()));
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      switch (kinds[i]) {
        case F::a: f[static_cast<Eigen::Index>(i)] = ak; break;
        case F::a_aprev: f[static_cast<Eigen::Index>(i)] = ak * aprev; break;
        case F::a_l: f[static_cast<Eigen::Index>(i)] = ak * l[ku]; break;
      }
    }
    return f;
  };
}

ShiftModel::ShiftModel(TimeGrid grid, Vector psi, std::vector<std::string> feature_names)
    : ShiftModel(std::move(grid), std::move(psi), shift_features(feature_names), feature_names) {}

ShiftModel::ShiftModel(TimeGrid grid, Vector psi, ShiftFeatures features, std::vector<std::string> feature_names)
    : grid_(std::move(grid)), psi_(std::move(psi)), features_(std::move(features)), names_(std::move(feature_names)) {
  if (static_cast<std::size_t>(psi_.size()) != names_.size())
    throw ConfigError("psi has " + std::to_string(psi_.size()) + " entries but the model has " +
                      std::to_string(names_.size()) + " features");
  if (!psi_.allFinite()) throw ConfigError("psi entries must be finite");
}

ShiftModel ShiftModel::with_psi(Vector psi) const {
  ShiftModel m = *this;
  if (psi.size() != psi_.size()) throw ConfigError("with_psi: dimension mismatch");
  m.psi_ = std::move(psi);
  return m;
}

int ShiftModel::visit_of(HistoryView l, HistoryView a) const {
  if (l.empty() || l.size() != a.size()) throw DomainError("shift functions need l_0..l_k and a_0..a_k");
  const int k = static_cast<int>(l.size()) - 1;
  if (k > grid_.K()) throw GridBoundsError("history longer than the grid");
  return k;
}

void ShiftModel::check_domain(int k, double t) const {
  if (!(t > grid_.tau(k))) throw DomainError("shift function argument must exceed tau_" + std::to_string(k));
}

Vector ShiftModel::features(HistoryView l, HistoryView a) const {
  const int k = visit_of(l, a);
  Vector f = features_(k, l, a);
  if (f.size() != psi_.size()) throw ConfigError("feature hook returned the wrong dimension");
  return f;
}

double ShiftModel::exponent(HistoryView l, HistoryView a) const { return psi_.dot(features(l, a)); }

double ShiftModel::gamma(HistoryView l, HistoryView a, double t) const {
  const int k = visit_of(l, a);
  check_domain(k, t);
  const double lo = grid_.tau(k);
  const double hi = grid_.interval_end(k);
  const double scale = std::exp(exponent(l, a));
  if (t <= hi) return lo + (t - lo) * scale;
  return lo + (hi - lo) * scale + (t - hi);
}

double ShiftModel::gamma_inv(HistoryView l, HistoryView a, double y) const {
  const int k = visit_of(l, a);
  check_domain(k, y);
  const double lo = grid_.tau(k);
  const double hi = grid_.interval_end(k);
  const double scale = std::exp(exponent(l, a));
  const double bend = hi == kInf ? kInf : lo + (hi - lo) * scale;
  if (y <= bend) return lo + (y - lo) / scale;
  return hi + (y - bend);
}

double ShiftModel::gamma_deriv(HistoryView l, HistoryView a, double t) const {
  const int k = visit_of(l, a);
  check_domain(k, t);
  return t <= grid_.interval_end(k) ? std::exp(exponent(l, a)) : 1.0;
}

Vector ShiftModel::gamma_dpsi(HistoryView l, HistoryView a, double t) const {
  const int k = visit_of(l, a);
  check_domain(k, t);
  const Vector f = features(l, a);
  const double lo = grid_.tau(k);
  const double span = std::min(t, grid_.interval_end(k)) - lo;
  return span * std::exp(psi_.dot(f)) * f;
}

namespace {

void check_cover(HistoryView l, HistoryView a, int p) {
  if (static_cast<int>(l.size()) <= p || static_cast<int>(a.size()) <= p)
    throw InsufficientHistory("histories do not reach visit " + std::to_string(p));
}

}  // namespace

double blip_down(const ShiftModel& model, HistoryView l, HistoryView a, double t, int upto) {
  const int p = model.grid().interval_index(t);
  if (upto > p) return t;
  if (upto < 0) throw GridBoundsError("blip_down: negative visit index");
  check_cover(l, a, p);
  double v = t;
  for (int m = p; m >= upto; --m) {
    const auto n = static_cast<std::size_t>(m) + 1;
    v = model.gamma(l.first(n), a.first(n), v);
  }
  return v;
}

double blip_down(const ShiftModel& model, const Trajectory& traj, int upto) {
  return blip_down(model, traj.covariates, traj.treatments, traj.event_time, upto);
}

double blip_down_deriv(const ShiftModel& model, HistoryView l, HistoryView a, double t) {
  const int p = model.grid().interval_index(t);
  check_cover(l, a, p);
  double v = t;
  double d = 1.0;
  for (int m = p; m >= 0; --m) {
    const auto n = static_cast<std::size_t>(m) + 1;
    d *= model.gamma_deriv(l.first(n), a.first(n), v);
    v = model.gamma(l.first(n), a.first(n), v);
  }
  return d;
}

Vector blip_down_dpsi(const ShiftModel& model, HistoryView l, HistoryView a, double t) {
  const int p = model.grid().interval_index(t);
  check_cover(l, a, p);
  double v = t;
  Vector d = Vector::Zero(model.dim());
  for (int m = p; m >= 0; --m) {
    const auto n = static_cast<std::size_t>(m) + 1;
    d = model.gamma_deriv(l.first(n), a.first(n), v) * d + model.gamma_dpsi(l.first(n), a.first(n), v);
    v = model.gamma(l.first(n), a.first(n), v);
  }
  return d;
}

double blip_up(const ShiftModel& model, double t0, HistoryView l, HistoryView a) {
  if (!(t0 > 0.0)) throw DomainError("blip_up: t0 must be > 0");
  const auto& grid = model.grid();
  double v = t0;
  for (int k = 0; k <= grid.K(); ++k) {
    const auto n = static_cast<std::size_t>(k) + 1;
    if (l.size() < n || a.size() < n)
      throw InsufficientHistory("blip_up: histories end at visit " + std::to_string(k - 1) +
                                " before the event time settles");
    v = model.gamma_inv(l.first(n), a.first(n), v);
    if (v <= grid.interval_end(k)) return v;
  }
  return v;
}

double survival_threshold(const ShiftModel& model, HistoryView l, HistoryView a, int k) {
  if (k <= 0) return 0.0;
  return blip_down(model, l, a, model.grid().tau(k), 0);
}

RecordBlip::RecordBlip(const ShiftModel& model, const Trajectory& traj) {
  const auto& grid = model.grid();
  const int p = grid.interval_index(traj.event_time);
  check_cover(traj.covariates, traj.treatments, p);
  features_.resize(p + 1, model.dim());
  widths_.resize(p + 1);
  for (int m = 0; m <= p; ++m) {
    const auto n = static_cast<std::size_t>(m) + 1;
    features_.row(m) = model.features(HistoryView(traj.covariates).first(n), HistoryView(traj.treatments).first(n));
    widths_[m] = (m < p ? grid.tau(m + 1) : traj.event_time) - grid.tau(m);
  }
}

double RecordBlip::t0(const Vector& psi) const { return widths_.dot((features_ * psi).array().exp().matrix()); }

Vector RecordBlip::dt0_dpsi(const Vector& psi) const {
  const Vector w = widths_.array() * (features_ * psi).array().exp();
  return features_.transpose() * w;
}

}  // namespace snftm
