#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/dgp.hpp"
#include "snftm/laws.hpp"

namespace snftm {

/// One observed-data cell: death in interval p after history (l_0..l_p,
/// a_0..a_p). On this cell T0 ranges over (lo, hi] and T = tau_p + (T0 - lo) / slope.
/// weight[j] is the product of covariate and treatment probabilities given
/// that T0 lies in prognosis bin j.
struct Atom {
  History l;
  History a;
  int p = 0;
  double lo = 0.0;
  double hi = 0.0;
  double slope = 1.0;
  std::vector<double> weight;
};

/// Exact enumeration of a small structural world.
class EnumeratedWorld : public ExactLaw {
 public:
  explicit EnumeratedWorld(DgpConfig cfg);

  const DgpConfig& config() const { return cfg_; }
  const TimeGrid& grid() const override { return cfg_.grid; }
  const Alphabets& alphabets() const override { return cfg_.alphabets; }
  const PrognosisBins& bins() const { return bins_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const ConditionalLaws& laws() const { return laws_; }

  double history_mass(HistoryView l, HistoryView a) const override;

  double atom_mass(const Atom& atom) const;
  /// P(atom, T0 in (x, inf)).
  double atom_t0_tail(const Atom& atom, double x) const;
  /// P(atom, T_k > x) with T_k = blip_down(check, T, k) computed from the observed record.
  double atom_blip_tail(const Atom& atom, const ShiftModel& check, int k, double x) const;

  /// Density of (L-bar, A-bar, T) at a trajectory.
  double joint_density(const Trajectory& traj) const;
  /// Product of the treatment probabilities along a trajectory.
  double treatment_factor(const Trajectory& traj) const;

  /// P(T^g > t).
  double exact_survival(const TreatmentRegime& g, double t) const;
  /// P(T^g > t | L-bar_k = l, A-bar_{k-1} = g-bar_{k-1}(l), T > tau_k).
  double exact_conditional_survival(const TreatmentRegime& g, HistoryView l, double t) const;
  /// E[T^g].
  double exact_mean(const TreatmentRegime& g) const;

 private:
  std::vector<double> covariate_row(int k, int bin, HistoryView l_prev, HistoryView a_prev) const;
  double cf_tail(const TreatmentRegime& g, History& l, History& a, const std::vector<double>& w, double thr, int p,
                 double t) const;
  double cf_mean(const TreatmentRegime& g, History& l, History& a, const std::vector<double>& w, double thr) const;
  void enumerate(History& l, History& a, const std::vector<double>& w, double thr);

  DgpConfig cfg_;
  PrognosisBins bins_;
  std::vector<Atom> atoms_;
  ConditionalLaws laws_;
};

struct CheckResult {
  std::string name;
  bool pass = true;
  bool skipped = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t evaluations = 0;
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void record(double deviation, const std::string& where);
};

struct VerifyReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool pass() const;
  const CheckResult* find(const std::string& name) const;
};

/// n evaluation times spread over (0, 2.5 tau_K].
std::vector<double> oracle_time_grid(const TimeGrid& grid, int n = 20);

/// All table regimes of the alphabet (doses per history per visit), or a
/// seeded random subset of size cap when there are more than cap.
std::vector<TreatmentRegime> enumerate_regimes(const TimeGrid& grid, const Alphabets& alphabets, std::size_t cap,
                                               std::uint64_t seed, bool* truncated = nullptr);

/// Marginal and per-cell G-computation against the exact counterfactual law.
VerifyReport verify_gcomputation(const EnumeratedWorld& world, std::span<const TreatmentRegime> regimes,
                                 std::span<const double> times, double tol = 1e-10);

/// s values must coincide between two worlds sharing their observed
/// covariate and survival laws but not their treatment laws.
VerifyReport verify_treatment_law_independence(const EnumeratedWorld& a, const EnumeratedWorld& b,
                                               std::span<const TreatmentRegime> regimes, std::span<const double> times,
                                               double tol = 1e-12);

/// Law of T0^gamma, the independence factorization and the T_k^gamma
/// identity, with gamma taken from check (the truth gives exact identities).
VerifyReport verify_blip_theorems(const EnumeratedWorld& world, const ShiftModel& check, std::span<const double> times,
                                  double tol = 1e-12);

struct NullEquivalenceOptions {
  std::size_t regime_cap = 10000;
  std::uint64_t seed = kDefaultSeed;
  double equal_tol = 1e-12;
  double witness_min = 1e-3;
};

/// Identity gamma on every positive-probability cell iff all evaluable
/// regimes share one survival curve; otherwise a witness pair of regimes.
VerifyReport verify_null_equivalence(const EnumeratedWorld& world, std::span<const double> times,
                                     const NullEquivalenceOptions& opt = {});

/// Regimes g1 (a_m on the prefixes of l, 0 elsewhere) and g2 = (g1_{k-1}, 0).
std::pair<TreatmentRegime, TreatmentRegime> witness_regimes(const Alphabets& alphabets, HistoryView l, HistoryView a);

}  // namespace snftm
