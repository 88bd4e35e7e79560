#pragma once

#include <functional>
#include <string>
#include <vector>

#include "snftm/error.hpp"
#include "snftm/types.hpp"

namespace snftm {

/// Visit times 0 = tau_0 < tau_1 < ... < tau_K shared by every subject.
/// Interval k is (tau_k, tau_{k+1}], with tau_{K+1} = +inf.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> taus);

  int K() const { return static_cast<int>(taus_.size()) - 1; }
  double tau(int k) const;
  double interval_end(int k) const;
  /// p with tau_p < t <= tau_{p+1}; K for t > tau_K. Throws for t <= 0.
  int interval_index(double t) const;
  const std::vector<double>& taus() const { return taus_; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> taus_;
};

/// Alphabet sizes |L_k| and |A_k| per visit. Codes are 0..size-1; treatment
/// code 0 is the baseline "no treatment".
struct Alphabets {
  std::vector<int> covariate;
  std::vector<int> treatment;

  static Alphabets uniform(const TimeGrid& grid, int covariates, int treatments);
  void validate(const TimeGrid& grid) const;
  /// Number of covariate histories l_0..l_k.
  std::size_t covariate_histories(int k) const;
  bool binary_treatment() const;

  friend bool operator==(const Alphabets&, const Alphabets&) = default;
};

/// One subject's record (L_0..L_p, A_0..A_p, T) with p = p(T).
struct Trajectory {
  History covariates;
  History treatments;
  double event_time = 0.0;

  int last_visit() const { return static_cast<int>(covariates.size()) - 1; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

void validate_trajectory(const Trajectory& traj, const TimeGrid& grid,
                         const Alphabets& alphabets);

struct Cohort {
  TimeGrid grid;
  Alphabets alphabets;
  std::vector<Trajectory> subjects;

  void validate() const;
};

/// Deterministic rule g_k(l_0..l_k) -> dose, one per visit.
class TreatmentRegime {
 public:
  using Rule = std::function<int(int k, HistoryView covariates)>;

  TreatmentRegime(std::string name, Rule rule);

  /// Never treat: the baseline regime 0-bar.
  static TreatmentRegime never();
  /// (a_0, ..., a_k, 0, 0, ...): fixed doses then baseline.
  static TreatmentRegime static_doses(History doses);
  /// dose when l_k >= cut, else otherwise.
  static TreatmentRegime threshold(int cut, int dose, int otherwise = 0);
  /// Full table: doses[k][index of (l_0..l_k) in mixed radix], most
  /// significant digit l_0.
  static TreatmentRegime table(const Alphabets& alphabets, std::vector<std::vector<int>> doses,
                               std::string name = "table");

  const std::string& name() const { return name_; }
  int dose(int k, HistoryView covariates) const;

 private:
  std::string name_;
  Rule rule_;
};

/// g-bar_k(l-bar_k) = (g_0(l_0), ..., g_k(l-bar_k)).
History apply_regime(const TreatmentRegime& g, const TimeGrid& grid, HistoryView covariates);

/// Mixed-radix index of l_0..l_k (l_0 most significant).
std::size_t history_index(const Alphabets& alphabets, HistoryView covariates);
History history_from_index(const Alphabets& alphabets, int k, std::size_t index);

/// A law of (L, A, T) that can report exact history probabilities.
class ExactLaw {
 public:
  virtual ~ExactLaw() = default;
  virtual const TimeGrid& grid() const = 0;
  virtual const Alphabets& alphabets() const = 0;
  virtual bool exact() const { return true; }
  /// P(L-bar_k = l, A-bar = a, T > tau_k) with k = l.size() - 1 and
  /// a.size() equal to k (treatment at k left free) or k + 1.
  virtual double history_mass(HistoryView l, HistoryView a) const = 0;
};

/// Evaluability: whenever the regime was followed to tau_k with positive
/// probability, its next dose also has positive probability.
bool is_evaluable(const TreatmentRegime& g, const ExactLaw& law);

}  // namespace snftm
