#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "snftm/error.hpp"

namespace snftm {

/// Upper tail P(X > x) of a chi-square variable with integer df >= 1.
inline double chi2_sf(double x, int df) {
  if (df < 1) throw DomainError("chi2_sf: df must be >= 1");
  if (!(x > 0.0)) return 1.0;
  const double h = 0.5 * x;
  if (df % 2 == 0) {
    double term = 1.0, sum = 1.0;
    for (int i = 1; i < df / 2; ++i) {
      term *= h / i;
      sum += term;
    }
    return std::min(1.0, std::exp(-h) * sum);
  }
  double sum = std::erfc(std::sqrt(h));
  double term = std::sqrt(h) / std::tgamma(1.5);  // h^{1/2} / Gamma(3/2)
  for (int i = 1; i <= (df - 1) / 2; ++i) {
    sum += std::exp(-h) * term;
    term *= h / (i + 0.5);
  }
  return std::min(1.0, sum);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double sd_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// sup_t |F_n(t) - F(t)| for a sample against a continuous CDF.
template <typename Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

}  // namespace snftm
