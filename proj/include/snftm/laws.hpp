#pragma once

#include <compare>
#include <map>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/survival.hpp"

namespace snftm {

/// (l_0..l_k, a_0..a_k) or, for covariate transitions, (l_0..l_{k-1}, a_0..a_{k-1}).
struct HistoryKey {
  History l;
  History a;
  auto operator<=>(const HistoryKey&) const = default;
};

/// The observed-data ingredients of G-computation.
///
/// covariate(l_{k-1}, a_{k-1}) is P(L_k = . | L-bar_{k-1}, A-bar_{k-1}, T > tau_k)
/// (empty histories for k = 0), and survival(l_k, a_k) is
/// P(T > t | L-bar_k, A-bar_k, T > tau_k) on (tau_k, tau_{k+1}]. Treatment
/// laws are not stored. Cells missing from either map are outside the support.
class ConditionalLaws {
 public:
  ConditionalLaws(TimeGrid grid, Alphabets alphabets);

  const TimeGrid& grid() const { return grid_; }
  const Alphabets& alphabets() const { return alphabets_; }

  void set_covariate(HistoryView l_prev, HistoryView a_prev, std::vector<double> probs);
  void set_survival(HistoryView l, HistoryView a, IntervalSurvival s);

  bool has_covariate(HistoryView l_prev, HistoryView a_prev) const;
  bool has_survival(HistoryView l, HistoryView a) const;
  /// UndefinedCell when the cell is not in the support.
  const std::vector<double>& covariate(HistoryView l_prev, HistoryView a_prev) const;
  const IntervalSurvival& survival(HistoryView l, HistoryView a) const;

  const std::map<HistoryKey, std::vector<double>>& covariate_cells() const { return covariate_; }
  const std::map<HistoryKey, IntervalSurvival>& survival_cells() const { return survival_; }

 private:
  TimeGrid grid_;
  Alphabets alphabets_;
  std::map<HistoryKey, std::vector<double>> covariate_;
  std::map<HistoryKey, IntervalSurvival> survival_;
};

std::string describe_cell(HistoryView l, HistoryView a);

}  // namespace snftm
