#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/dgp.hpp"
#include "snftm/gcomp.hpp"
#include "snftm/shift.hpp"
#include "snftm/survival.hpp"

namespace snftm {

/// Fitted ingredients of the counterfactual sampler: a law for T0, covariate
/// laws given (k, bin(T0), past) and the fitted shift model.
struct FittedWorld {
  ShiftModel model;
  Alphabets alphabets;
  std::vector<double> bins;
  CategoricalLaw covariate_law;
  /// Sorted blipped times (empirical baseline); empty when `baseline` is set.
  std::vector<double> baseline_sample;
  std::optional<SurvivalCurve> baseline;

  /// Exact structural laws of a dgp and its true psi.
  static FittedWorld from_dgp(const DgpConfig& cfg);
  /// Empirical T0 law of blip-down times under `model` and covariate
  /// frequencies per (k, bin, l-bar_{k-1}, a-bar_{k-1}).
  static FittedWorld from_cohort(const Cohort& cohort, const ShiftModel& model, std::vector<double> bins);

  void validate() const;
  double draw_t0(RandomStream& rng) const;
};

struct CounterfactualSample {
  std::vector<double> t0;
  std::vector<Trajectory> paths;
  CurveEstimate curve;
};

/// n draws of T^g; draw i uses the stream ("cfsim.replicate", i) of the seed.
CounterfactualSample simulate_counterfactual(const FittedWorld& world, const TreatmentRegime& g, std::size_t n,
                                             std::span<const double> t_grid, std::uint64_t seed, int threads = 1);

}  // namespace snftm
