#pragma once

#include <vector>

#include "snftm/types.hpp"

namespace snftm {

/// Piecewise-exponential survival function on (start, inf).
///
/// Hazard rates_[i] applies on (breaks_[i-1], breaks_[i]] with breaks_[-1] =
/// start and the last rate extending to infinity. All rates are positive, so
/// the curve is continuous, strictly decreasing and tends to zero; quantiles
/// are exact inverses of the cumulative hazard.
class SurvivalCurve {
 public:
  SurvivalCurve(double start, std::vector<double> breakpoints, std::vector<double> rates);
  static SurvivalCurve exponential(double rate, double start = 0.0);

  double start() const { return start_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& rates() const { return rates_; }
  int pieces() const { return static_cast<int>(rates_.size()); }

  /// s(t) for t > start; DomainError otherwise.
  double survival(double t) const;
  /// s(t) with s = 1 on (-inf, start] and s(inf) = 0.
  double clamped(double t) const;
  /// Smallest t with s(t) <= u, u in (0, 1]; quantile(1) = start.
  double quantile(double u) const;

  double cumulative_hazard(double t) const;
  /// Piece holding t under the (b_{i-1}, b_i] convention.
  int piece_index(double t) const;
  double hazard(double t) const { return rates_[piece_index(t)]; }
  double log_density(double t) const;
  /// Time spent in each piece by a subject followed from start to t.
  std::vector<double> exposure(double t) const;
  /// int_a^b x dF(x) over (a, b], b may be inf.
  double partial_expectation(double a, double b) const;
  double mean() const { return partial_expectation(start_, kInf); }

 private:
  double start_;
  std::vector<double> breaks_;
  std::vector<double> rates_;
  std::vector<double> cumhaz_;  // cumulative hazard at each breakpoint
};

/// Survival of T on one visit interval (start, end], conditional on T > start.
///
/// Segment i covers (from_i, from_{i+1}] and has the closed form
/// offset_i + scale_i * exp(-rate_i * (t - from_i)). This family contains the
/// piecewise-exponential curves (offset = 0) and the truncated mixtures that
/// arise when prognosis bins of T0 are pushed through a shift function.
class IntervalSurvival {
 public:
  struct Segment {
    double from;
    double offset;
    double scale;
    double rate;
  };

  IntervalSurvival(double start, double end, std::vector<Segment> segments);
  static IntervalSurvival exponential(double start, double end, double rate);

  double start() const { return start_; }
  double end() const { return end_; }
  const std::vector<Segment>& segments() const { return segments_; }

  /// Value at t in (start, end]; t <= start gives 1, beyond end DomainError.
  double operator()(double t) const;
  /// Probability of surviving the whole interval, s(end).
  double at_end() const;
  /// Smallest t with s(t) <= u; requires u in [s(end), 1].
  double quantile(double u) const;

 private:
  double start_;
  double end_;
  std::vector<Segment> segments_;
};

}  // namespace snftm
