#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snftm/core.hpp"
#include "snftm/laws.hpp"

namespace snftm {

/// s_{l-bar_k, g}(t) for t > tau_k by backward recursion over visits.
double s_conditional(const ConditionalLaws& laws, const TreatmentRegime& g, HistoryView l, double t);

/// s_g(t) = sum over l_0 of P(L_0 = l_0) s_{l_0, g}(t).
double s_marginal(const ConditionalLaws& laws, const TreatmentRegime& g, double t);

/// Plug-in laws: covariate cell frequencies among subjects at risk and one
/// exponential rate (events / person-time) per history cell and interval.
ConditionalLaws estimate_laws(const Cohort& cohort);

struct CurveEstimate {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<double> stderr_;
  double mean = 0.0;
  double mean_se = 0.0;
  std::size_t draws = 0;
};

/// Forward simulation of (L, T) under g from the laws; replicate i uses the
/// stream ("gcomp.replicate", i) of the seed.
CurveEstimate mc_gcomp(const ConditionalLaws& laws, const TreatmentRegime& g, std::span<const double> t_grid,
                       std::size_t n_sim, std::uint64_t seed, int threads = 1);

/// Survivor fractions with binomial standard errors from a sample of times.
CurveEstimate empirical_curve(std::span<const double> sample, std::span<const double> t_grid);

}  // namespace snftm
