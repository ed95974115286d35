#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace icnlm {

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

//! Sample standard deviation with n-1 denominator.
inline double sample_sd(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

//! Type-7 (linear interpolation) sample quantile of a sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw EmptySample("quantile_sorted: empty input");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::min(
      std::floor(h), static_cast<double>(n - 2)));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace icnlm
