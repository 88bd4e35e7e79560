#include "snftm/survival.hpp"

#include <algorithm>
#include <cmath>

#include "snftm/error.hpp"

namespace snftm {

SurvivalCurve::SurvivalCurve(double start, std::vector<double> breakpoints, std::vector<double> rates)
    : start_(start), breaks_(std::move(breakpoints)), rates_(std::move(rates)) {
  if (rates_.size() != breaks_.size() + 1)
    throw ConfigError("piecewise-exponential curve needs one more rate than breakpoints");
  double prev = start_;
  for (double b : breaks_) {
    if (!(b > prev) || !std::isfinite(b)) throw ConfigError("breakpoints must be finite, increasing and above start");
    prev = b;
  }
  for (double r : rates_) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("hazard rates must be finite and > 0");
  }
  cumhaz_.resize(breaks_.size());
  double h = 0.0;
  prev = start_;
  for (std::size_t i = 0; i < breaks_.size(); ++i) {
    h += rates_[i] * (breaks_[i] - prev);
    cumhaz_[i] = h;
    prev = breaks_[i];
  }
}

SurvivalCurve SurvivalCurve::exponential(double rate, double start) { return SurvivalCurve(start, {}, {rate}); }

int SurvivalCurve::piece_index(double t) const {
  return static_cast<int>(std::lower_bound(breaks_.begin(), breaks_.end(), t) - breaks_.begin());
}

double SurvivalCurve::cumulative_hazard(double t) const {
  if (t <= start_) return 0.0;
  if (t == kInf) return kInf;
  const int i = piece_index(t);
  const double base = i == 0 ? 0.0 : cumhaz_[static_cast<std::size_t>(i) - 1];
  const double from = i == 0 ? start_ : breaks_[static_cast<std::size_t>(i) - 1];
  return base + rates_[static_cast<std::size_t>(i)] * (t - from);
}

double SurvivalCurve::survival(double t) const {
  if (!(t > start_)) throw DomainError("survival: t must exceed the support start");
  return std::exp(-cumulative_hazard(t));
}

double SurvivalCurve::clamped(double t) const {
  if (t <= start_) return 1.0;
  return std::exp(-cumulative_hazard(t));
}

double SurvivalCurve::quantile(double u) const {
  if (!(u > 0.0) || u > 1.0) throw DomainError("quantile: u must lie in (0, 1]");
  if (u == 1.0) return start_;
  const double h = -std::log(u);
  const auto i = static_cast<std::size_t>(std::upper_bound(cumhaz_.begin(), cumhaz_.end(), h) - cumhaz_.begin());
  // h sits in piece i: cumhaz_[i-1] <= h < cumhaz_[i].
  const double base = i == 0 ? 0.0 : cumhaz_[i - 1];
  const double from = i == 0 ? start_ : breaks_[i - 1];
  return from + (h - base) / rates_[i];
}

double SurvivalCurve::log_density(double t) const {
  if (!(t > start_)) throw DomainError("log_density: t must exceed the support start");
  return std::log(hazard(t)) - cumulative_hazard(t);
}

std::vector<double> SurvivalCurve::exposure(double t) const {
  std::vector<double> out(rates_.size(), 0.0);
  double from = start_;
  for (std::size_t i = 0; i < rates_.size() && t > from; ++i) {
    const double to = i < breaks_.size() ? breaks_[i] : kInf;
    out[i] = std::min(t, to) - from;
    from = to;
  }
  return out;
}

double SurvivalCurve::partial_expectation(double a, double b) const {
  a = std::max(a, start_);
  if (!(b > a)) return 0.0;
  // On a constant-rate piece (x, y]: int t r e^{-H} dt = S(x)(x + 1/r) - S(y)(y + 1/r).
  double total = 0.0;
  double from = start_;
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    const double to = i < breaks_.size() ? breaks_[i] : kInf;
    const double lo = std::max(from, a);
    const double hi = std::min(to, b);
    if (hi > lo) {
      const double r = rates_[i];
      const double s_lo = clamped(lo);
      total += s_lo * (lo + 1.0 / r);
      if (hi < kInf) total -= clamped(hi) * (hi + 1.0 / r);
    }
    from = to;
    if (from >= b) break;
  }
  return total;
}

IntervalSurvival::IntervalSurvival(double start, double end, std::vector<Segment> segments)
    : start_(start), end_(end), segments_(std::move(segments)) {
  if (!(end_ > start_)) throw ConfigError("interval survival needs end > start");
  if (segments_.empty() || segments_.front().from != start_)
    throw ConfigError("interval survival segments must start at the interval start");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (s.rate < 0.0 || s.scale < 0.0 || !std::isfinite(s.rate)) throw ConfigError("invalid survival segment");
    if (i > 0 && !(s.from > segments_[i - 1].from)) throw ConfigError("segments must be increasing");
  }
  if (end_ == kInf && segments_.back().offset != 0.0 && segments_.back().rate > 0.0)
    throw ConfigError("an unbounded interval must decay to zero");
}

IntervalSurvival IntervalSurvival::exponential(double start, double end, double rate) {
  return IntervalSurvival(start, end, {Segment{start, 0.0, 1.0, rate}});
}

double IntervalSurvival::operator()(double t) const {
  if (t <= start_) return 1.0;
  if (t > end_) throw DomainError("interval survival evaluated beyond its interval");
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double x, const Segment& s) { return x <= s.from; });
  const Segment& s = *(it - 1);
  if (t == kInf) return s.rate > 0.0 ? s.offset : s.offset + s.scale;
  return s.offset + s.scale * std::exp(-s.rate * (t - s.from));
}

double IntervalSurvival::at_end() const { return (*this)(end_); }

double IntervalSurvival::quantile(double u) const {
  if (u > 1.0 || u < 0.0) throw DomainError("quantile: u must lie in [0, 1]");
  if (u >= 1.0) return start_;
  // Last segment whose starting value is still >= u.
  std::size_t i = 0;
  for (std::size_t j = 1; j < segments_.size(); ++j) {
    const Segment& s = segments_[j];
    if (s.offset + s.scale >= u) i = j;
    else break;
  }
  const Segment& s = segments_[i];
  const double seg_end = i + 1 < segments_.size() ? segments_[i + 1].from : end_;
  if (s.scale <= 0.0 || s.rate <= 0.0 || u >= s.offset + s.scale) return s.from;
  const double ratio = (u - s.offset) / s.scale;
  if (!(ratio > 0.0)) {
    if (seg_end == kInf) throw DomainError("quantile: u below the infimum of the curve");
    return seg_end;
  }
  const double t = s.from - std::log(ratio) / s.rate;
  if (t > seg_end) {
    if (seg_end == kInf) return t;
    throw DomainError("quantile: u below the survival at the interval end");
  }
  return t;
}

}  // namespace snftm
