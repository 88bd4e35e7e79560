#include "snftm/core.hpp"

#include <algorithm>
#include <cmath>

namespace snftm {

TimeGrid::TimeGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.size() < 2) throw ConfigError("time grid needs K >= 1 (at least two visit times)");
  if (taus_.front() != 0.0) throw ConfigError("time grid must start at tau_0 = 0");
  for (std::size_t i = 1; i < taus_.size(); ++i) {
    if (!(taus_[i] > taus_[i - 1]) || !std::isfinite(taus_[i]))
      throw ConfigError("time grid must be finite and strictly increasing");
  }
}

double TimeGrid::tau(int k) const {
  if (k < 0 || k > K()) throw GridBoundsError("visit index " + std::to_string(k) + " outside grid");
  return taus_[static_cast<std::size_t>(k)];
}

double TimeGrid::interval_end(int k) const {
  if (k < 0 || k > K()) throw GridBoundsError("visit index " + std::to_string(k) + " outside grid");
  return k == K() ? kInf : taus_[static_cast<std::size_t>(k) + 1];
}

int TimeGrid::interval_index(double t) const {
  if (!(t > 0.0)) throw DomainError("interval_index: t must be > 0");
  const auto it = std::lower_bound(taus_.begin(), taus_.end(), t);
  return static_cast<int>(it - taus_.begin()) - 1;
}

Alphabets Alphabets::uniform(const TimeGrid& grid, int covariates, int treatments) {
  const auto n = static_cast<std::size_t>(grid.K() + 1);
  return Alphabets{std::vector<int>(n, covariates), std::vector<int>(n, treatments)};
}

void Alphabets::validate(const TimeGrid& grid) const {
  const auto n = static_cast<std::size_t>(grid.K() + 1);
  if (covariate.size() != n || treatment.size() != n)
    throw ConfigError("alphabets must list one size per visit 0..K");
  for (std::size_t k = 0; k < n; ++k) {
    if (covariate[k] < 1) throw ConfigError("covariate alphabet must be non-empty");
    if (treatment[k] < 1) throw ConfigError("treatment alphabet must contain the baseline code 0");
  }
}

std::size_t Alphabets::covariate_histories(int k) const {
  std::size_t n = 1;
  for (int m = 0; m <= k; ++m) n *= static_cast<std::size_t>(covariate[static_cast<std::size_t>(m)]);
  return n;
}

bool Alphabets::binary_treatment() const {
  return std::all_of(treatment.begin(), treatment.end(), [](int s) { return s <= 2; });
}

void validate_trajectory(const Trajectory& traj, const TimeGrid& grid, const Alphabets& alphabets) {
  if (!(traj.event_time > 0.0) || !std::isfinite(traj.event_time))
    throw DomainError("trajectory event time must be finite and > 0");
  const int p = grid.interval_index(traj.event_time);
  if (traj.last_visit() != p || traj.treatments.size() != traj.covariates.size())
    throw DomainError("trajectory histories must cover exactly the visits before T");
  for (int k = 0; k <= p; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (traj.covariates[ku] < 0 || traj.covariates[ku] >= alphabets.covariate[ku])
      throw DomainError("covariate code outside its alphabet at visit " + std::to_string(k));
    if (traj.treatments[ku] < 0 || traj.treatments[ku] >= alphabets.treatment[ku])
      throw DomainError("treatment code outside its alphabet at visit " + std::to_string(k));
  }
}

void Cohort::validate() const {
  alphabets.validate(grid);
  for (const auto& s : subjects) validate_trajectory(s, grid, alphabets);
}

TreatmentRegime::TreatmentRegime(std::string name, Rule rule)
    : name_(std::move(name)), rule_(std::move(rule)) {}

TreatmentRegime TreatmentRegime::never() {
  return TreatmentRegime("never", [](int, HistoryView) { return 0; });
}

TreatmentRegime TreatmentRegime::static_doses(History doses) {
  std::string name = "static(";
  for (std::size_t i = 0; i < doses.size(); ++i) name += (i ? "," : "") + std::to_string(doses[i]);
  name += ")";
  return TreatmentRegime(std::move(name), [doses = std::move(doses)](int k, HistoryView) {
    return static_cast<std::size_t>(k) < doses.size() ? doses[static_cast<std::size_t>(k)] : 0;
  });
}

TreatmentRegime TreatmentRegime::threshold(int cut, int dose, int otherwise) {
  return TreatmentRegime("threshold(" + std::to_string(cut) + ")",
                         [=](int k, HistoryView l) { return l[static_cast<std::size_t>(k)] >= cut ? dose : otherwise; });
}

TreatmentRegime TreatmentRegime::table(const Alphabets& alphabets, std::vector<std::vector<int>> doses,
                                       std::string name) {
  for (std::size_t k = 0; k < doses.size(); ++k) {
    if (doses[k].size() != alphabets.covariate_histories(static_cast<int>(k)))
      throw ConfigError("regime table size mismatch at visit " + std::to_string(k));
  }
  return TreatmentRegime(std::move(name), [alphabets, doses = std::move(doses)](int k, HistoryView l) {
    const auto ku = static_cast<std::size_t>(k);
    if (ku >= doses.size()) return 0;
    return doses[ku][history_index(alphabets, l.first(ku + 1))];
  });
}

int TreatmentRegime::dose(int k, HistoryView covariates) const {
  return rule_(k, covariates.first(static_cast<std::size_t>(k) + 1));
}

History apply_regime(const TreatmentRegime& g, const TimeGrid& grid, HistoryView covariates) {
  if (covariates.empty()) return {};
  if (static_cast<int>(covariates.size()) > grid.K() + 1)
    throw GridBoundsError("covariate history longer than the grid");
  History out(covariates.size());
  for (std::size_t k = 0; k < covariates.size(); ++k) out[k] = g.dose(static_cast<int>(k), covariates);
  return out;
}

std::size_t history_index(const Alphabets& alphabets, HistoryView covariates) {
  std::size_t idx = 0;
  for (std::size_t m = 0; m < covariates.size(); ++m)
    idx = idx * static_cast<std::size_t>(alphabets.covariate[m]) + static_cast<std::size_t>(covariates[m]);
  return idx;
}

History history_from_index(const Alphabets& alphabets, int k, std::size_t index) {
  History l(static_cast<std::size_t>(k) + 1);
  for (int m = k; m >= 0; --m) {
    const auto base = static_cast<std::size_t>(alphabets.covariate[static_cast<std::size_t>(m)]);
    l[static_cast<std::size_t>(m)] = static_cast<int>(index % base);
    index /= base;
  }
  return l;
}

bool is_evaluable(const TreatmentRegime& g, const ExactLaw& law) {
  if (!law.exact()) throw UnsupportedLaw("evaluability needs a law with exact history probabilities");
  const auto& grid = law.grid();
  const auto& alph = law.alphabets();
  for (int k = 0; k <= grid.K(); ++k) {
    const std::size_t n = alph.covariate_histories(k);
    for (std::size_t idx = 0; idx < n; ++idx) {
      const History l = history_from_index(alph, k, idx);
      const History a = apply_regime(g, grid, l);
      const HistoryView prefix(a.data(), static_cast<std::size_t>(k));
      if (law.history_mass(l, prefix) > 0.0 && !(law.history_mass(l, a) > 0.0)) return false;
    }
  }
  return true;
}

}  // namespace snftm
