#include "snftm/laws.hpp"

#include <cmath>

namespace snftm {

namespace {

HistoryKey key_of(HistoryView l, HistoryView a) {
  return HistoryKey{History(l.begin(), l.end()), History(a.begin(), a.end())};
}

std::string join(HistoryView v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

}  // namespace

std::string describe_cell(HistoryView l, HistoryView a) { return "l=" + join(l) + " a=" + join(a); }

ConditionalLaws::ConditionalLaws(TimeGrid grid, Alphabets alphabets)
    : grid_(std::move(grid)), alphabets_(std::move(alphabets)) {
  alphabets_.validate(grid_);
}

void ConditionalLaws::set_covariate(HistoryView l_prev, HistoryView a_prev, std::vector<double> probs) {
  const auto k = l_prev.size();
  if (a_prev.size() != k || static_cast<int>(k) > grid_.K())
    throw DomainError("covariate cell histories must both cover visits 0..k-1");
  if (probs.size() != static_cast<std::size_t>(alphabets_.covariate[k]))
    throw ConfigError("covariate probabilities do not match the alphabet at visit " + std::to_string(k));
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ConfigError("negative covariate probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("covariate probabilities must sum to 1");
  covariate_.insert_or_assign(key_of(l_prev, a_prev), std::move(probs));
}

void ConditionalLaws::set_survival(HistoryView l, HistoryView a, IntervalSurvival s) {
  if (l.empty() || l.size() != a.size() || static_cast<int>(l.size()) > grid_.K() + 1)
    throw DomainError("survival cell histories must both cover visits 0..k");
  const int k = static_cast<int>(l.size()) - 1;
  if (s.start() != grid_.tau(k) || s.end() != grid_.interval_end(k))
    throw ConfigError("interval survival does not span visit interval " + std::to_string(k));
  survival_.insert_or_assign(key_of(l, a), std::move(s));
}

bool ConditionalLaws::has_covariate(HistoryView l_prev, HistoryView a_prev) const {
  return covariate_.contains(key_of(l_prev, a_prev));
}

bool ConditionalLaws::has_survival(HistoryView l, HistoryView a) const {
  return survival_.contains(key_of(l, a));
}

const std::vector<double>& ConditionalLaws::covariate(HistoryView l_prev, HistoryView a_prev) const {
  auto it = covariate_.find(key_of(l_prev, a_prev));
  if (it == covariate_.end())
    throw UndefinedCell("no covariate law for cell " + describe_cell(l_prev, a_prev));
  return it->second;
}

const IntervalSurvival& ConditionalLaws::survival(HistoryView l, HistoryView a) const {
  auto it = survival_.find(key_of(l, a));
  if (it == survival_.end()) throw UndefinedCell("no interval survival for cell " + describe_cell(l, a));
  return it->second;
}

}  // namespace snftm
