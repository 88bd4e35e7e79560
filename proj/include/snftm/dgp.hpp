#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/laws.hpp"
#include "snftm/rng.hpp"
#include "snftm/shift.hpp"
#include "snftm/survival.hpp"

namespace snftm {

/// Baseline survival of T0 together with the prognosis cut points
/// c_1 < ... < c_m. Bin j is (c_j, c_{j+1}] with c_0 the support start and
/// c_{m+1} = inf.
class PrognosisBins {
 public:
  PrognosisBins(SurvivalCurve baseline, std::vector<double> cuts);

  const SurvivalCurve& baseline() const { return baseline_; }
  const std::vector<double>& cuts() const { return cuts_; }
  int count() const { return static_cast<int>(cuts_.size()) + 1; }
  /// Number of cuts strictly below t0.
  int bin_of(double t0) const;
  double lower(int j) const;
  double upper(int j) const;
  /// P(T0 in bin j).
  double mass(int j) const;
  /// P(T0 in bin j, T0 > x).
  double tail(int j, double x) const;
  /// P(T0 in bin j, lo < T0 <= hi).
  double slab(int j, double lo, double hi) const;

  /// Law of T on (tau, end] given T > tau for a history whose T0 has bin
  /// weights w (unnormalized), survival threshold thr and last-interval
  /// slope e^x: T > t iff T0 > thr + slope (t - tau).
  IntervalSurvival push_through(std::span<const double> w, double thr, double slope, double tau, double end) const;

 private:
  SurvivalCurve baseline_;
  std::vector<double> cuts_;
};

/// Linear predictor of one non-reference category of a softmax law.
struct LinearScore {
  double intercept = 0.0;
  double time = 0.0;            // times k
  double covariate = 0.0;       // times l_k (treatment laws only)
  double prev_covariate = 0.0;  // times l_{k-1}
  double prev_treatment = 0.0;  // times a_{k-1}
  std::vector<double> bin;      // per prognosis bin of T0 (covariate laws only)
  double prognosis = 0.0;       // times exp(-prognosis_rate * T0)
};

/// Multinomial logit over codes 0..scores.size(), code 0 the reference.
struct SoftmaxLaw {
  std::vector<LinearScore> scores;
  double prognosis_rate = 1.0;

  int categories() const { return static_cast<int>(scores.size()) + 1; }
  bool smooth_prognosis() const;
  /// l holds l_0..l_{k-1} (covariate law) or l_0..l_k (treatment law); a holds a_0..a_{k-1}.
  std::vector<double> probs(int k, int bin, HistoryView l, HistoryView a, double t0) const;
};

/// Conditional categorical law with explicit table cells over an optional
/// softmax fallback. A table key with bin -1 applies to every bin.
class CategoricalLaw {
 public:
  struct Key {
    int k;
    int bin;
    History l;
    History a;
    auto operator<=>(const Key&) const = default;
  };

  CategoricalLaw() = default;
  explicit CategoricalLaw(SoftmaxLaw softmax) : softmax_(std::move(softmax)) {}

  void set(Key key, std::vector<double> probs);
  const std::optional<SoftmaxLaw>& softmax() const { return softmax_; }
  const std::map<Key, std::vector<double>>& table() const { return table_; }
  bool depends_on_t0() const { return softmax_ && softmax_->smooth_prognosis(); }

  /// UndefinedCell when neither a table cell nor the softmax covers the query.
  std::vector<double> probs(int k, int bin, HistoryView l, HistoryView a, double t0 = 0.0) const;

 private:
  std::optional<SoftmaxLaw> softmax_;
  std::map<Key, std::vector<double>> table_;
};

/// Counterfactual-first structural world with known shift parameter.
struct DgpConfig {
  TimeGrid grid;
  Alphabets alphabets;
  SurvivalCurve baseline;
  std::vector<double> thresholds;
  CategoricalLaw covariate_law;  // (k, bin(T0), l_0..l_{k-1}, a_0..a_{k-1}) -> P(L_k)
  CategoricalLaw treatment_law;  // (k, -1, l_0..l_k, a_0..a_{k-1}) -> P(A_k)
  ShiftModel model;              // psi0 and its features
  std::uint64_t seed = kDefaultSeed;

  void validate() const;
  PrognosisBins bins() const { return PrognosisBins(baseline, thresholds); }
  DgpConfig with_seed(std::uint64_t s) const;
  DgpConfig with_psi(Vector psi) const;
};

struct SubjectDraw {
  Trajectory trajectory;
  double t0 = 0.0;
  int bin = 0;
};

using TreatmentChooser = std::function<int(int k, HistoryView l, HistoryView a_prev, RandomStream& rng)>;

/// Sequential construction shared by the simulator and the counterfactual
/// sampler: covariates from cov, treatment from choose, candidate death time
/// V = gamma^{-1} compositions of t0 until it falls in the current interval.
Trajectory forward_path(const ShiftModel& model, const Alphabets& alphabets, const CategoricalLaw& cov, double t0,
                        int bin, const TreatmentChooser& choose, RandomStream& rng);

RandomStream subject_stream(std::uint64_t seed, std::size_t i);

SubjectDraw sample_subject(const DgpConfig& cfg, RandomStream& rng);
Trajectory sample_trajectory(const DgpConfig& cfg, RandomStream& rng);
std::vector<SubjectDraw> sample_subjects(const DgpConfig& cfg, std::size_t n, int threads = 1);
Cohort sample_cohort(const DgpConfig& cfg, std::size_t n, int threads = 1);

/// Exact observed-data (covariate transition, interval survival) laws.
/// Cells are kept where the history has positive probability.
ConditionalLaws true_conditional_laws(const DgpConfig& cfg);

/// Probability vectors of the structural world, with bins resolved. Throws
/// UnsupportedLaw when the covariate law has a smooth T0 term.
std::vector<double> covariate_probs(const DgpConfig& cfg, int k, int bin, HistoryView l_prev, HistoryView a_prev);
std::vector<double> treatment_probs(const DgpConfig& cfg, int k, HistoryView l, HistoryView a_prev);

}  // namespace snftm
