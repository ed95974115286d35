#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace icnlm {

//! Per-observation predictive CDF, queried at arbitrary response values.
using CdfEvaluator = std::function<double(double)>;

struct MarginalCalibrationPoint {
  double y;
  double average_cdf;
  double empirical_cdf;
};

struct PitPoint {
  double level;
  double observed;   //!< frequency of PIT values at or below the level
  double deviation;  //!< observed - level
};

struct CoveragePoint {
  double level;
  double observed;
};

//! Per-observation prediction intervals at one nominal level.
struct IntervalSet {
  double level;
  std::vector<std::pair<double, double>> bounds;
};

struct PointMetrics {
  double mae;
  double mse;
  double accuracy_i;   //!< fraction with |error| strictly below 6 units
  double accuracy_ii;  //!< fraction with |error| at most 2 units
};

struct ErrorVariancePoint {
  double threshold;
  double mse;  //!< NaN when no observation is retained at this threshold
  double retained_fraction;
};

//! The full evaluation suite assembled by the caller.
struct CalibrationReport {
  std::vector<MarginalCalibrationPoint> marginal_curve;
  std::vector<PitPoint> pit_curve;
  std::vector<CoveragePoint> coverage_curve;
  PointMetrics metrics{};
  std::vector<ErrorVariancePoint> error_variance_curve;
};

//! Nominal-level grid {0.01, 0.02, ..., 0.99} shared by PIT and coverage.
inline std::vector<double> default_level_grid() {
  std::vector<double> levels(99);
  for (int i = 1; i <= 99; ++i) levels[static_cast<std::size_t>(i - 1)] = i / 100.0;
  return levels;
}

//! Equispaced response grid spanning the observed range plus a 5% margin.
inline std::vector<double> calibration_y_grid(const std::vector<double>& y,
                                              std::size_t points = 201) {
  if (y.empty()) throw LengthMismatch("calibration grid: need at least one response");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  const double margin = 0.05 * (*mx - *mn);
  const double lo = *mn - margin, hi = *mx + margin;
  std::vector<double> grid(points);
  for (std::size_t t = 0; t < points; ++t)
    grid[t] = lo + (hi - lo) * static_cast<double>(t) /
                       static_cast<double>(points > 1 ? points - 1 : 1);
  return grid;
}

//! Average predictive CDF against the empirical CDF on a response grid.
inline std::vector<MarginalCalibrationPoint> marginal_calibration(
    const std::vector<CdfEvaluator>& cdfs, const std::vector<double>& y,
    const std::vector<double>& grid) {
  if (cdfs.size() != y.size() || y.empty())
    throw LengthMismatch("marginal_calibration: one CDF evaluator per response");
  std::vector<double> sorted_y = y;
  std::sort(sorted_y.begin(), sorted_y.end());
  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());

  const double n = static_cast<double>(y.size());
  std::vector<MarginalCalibrationPoint> curve;
  curve.reserve(sorted_grid.size());
  for (double g : sorted_grid) {
    double avg = 0.0;
    for (const auto& f : cdfs) avg += f(g);
    const auto at_or_below =
        std::upper_bound(sorted_y.begin(), sorted_y.end(), g) - sorted_y.begin();
    curve.push_back({g, avg / n, static_cast<double>(at_or_below) / n});
  }
  return curve;
}

//! Observed frequency of PIT values u_i <= p at each nominal level p.
inline std::vector<PitPoint> probabilistic_calibration(
    const std::vector<double>& pit, const std::vector<double>& levels) {
  if (pit.empty())
    throw LengthMismatch("probabilistic_calibration: need at least one PIT value");
  for (double u : pit) {
    if (!(u >= 0.0 && u <= 1.0))
      throw PitOutOfRange("probabilistic_calibration: PIT values must lie in [0, 1]");
  }
  std::vector<double> sorted_u = pit;
  std::sort(sorted_u.begin(), sorted_u.end());
  std::vector<double> sorted_levels = levels;
  std::sort(sorted_levels.begin(), sorted_levels.end());

  const double n = static_cast<double>(pit.size());
  std::vector<PitPoint> curve;
  curve.reserve(sorted_levels.size());
  for (double p : sorted_levels) {
    const auto at_or_below =
        std::upper_bound(sorted_u.begin(), sorted_u.end(), p) - sorted_u.begin();
    const double observed = static_cast<double>(at_or_below) / n;
    curve.push_back({p, observed, observed - p});
  }
  return curve;
}

//! Fraction of responses falling inside their interval, per nominal level.
//! Membership is inclusive at both endpoints.
inline std::vector<CoveragePoint> coverage(const std::vector<IntervalSet>& sets,
                                           const std::vector<double>& y) {
  if (y.empty()) throw LengthMismatch("coverage: need at least one response");
  std::vector<CoveragePoint> curve;
  curve.reserve(sets.size());
  for (const auto& set : sets) {
    if (set.bounds.size() != y.size())
      throw LengthMismatch("coverage: one interval per response");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto [lo, hi] = set.bounds[i];
      if (!(lo <= hi))
        throw MalformedInterval("coverage: interval bounds out of order");
      if (y[i] >= lo && y[i] <= hi) ++inside;
    }
    curve.push_back(
        {set.level, static_cast<double>(inside) / static_cast<double>(y.size())});
  }
  std::sort(curve.begin(), curve.end(),
            [](const CoveragePoint& a, const CoveragePoint& b) {
              return a.level < b.level;
            });
  return curve;
}

//! MAE, MSE and the two fixed-threshold accuracies (|e| < 6, |e| <= 2).
inline PointMetrics point_metrics(const std::vector<double>& y_hat,
                                  const std::vector<double>& y) {
  if (y_hat.size() != y.size() || y.empty())
    throw LengthMismatch("point_metrics: one prediction per response");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t within_six = 0, within_two = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = std::abs(y_hat[i] - y[i]);
    abs_sum += e;
    sq_sum += e * e;
    if (e < 6.0) ++within_six;
    if (e <= 2.0) ++within_two;
  }
  const double n = static_cast<double>(y.size());
  return {abs_sum / n, sq_sum / n, static_cast<double>(within_six) / n,
          static_cast<double>(within_two) / n};
}

//! MSE restricted to observations whose predictive variance is at most the
//! threshold, plus the retained fraction. An empty retention set yields an
//! NaN MSE with fraction 0 rather than an error.
inline std::vector<ErrorVariancePoint> error_vs_variance(
    const std::vector<double>& errors_sq, const std::vector<double>& variances,
    const std::vector<double>& thresholds) {
  if (errors_sq.size() != variances.size() || errors_sq.empty())
    throw LengthMismatch("error_vs_variance: one variance per squared error");

  std::vector<std::pair<double, double>> ordered(errors_sq.size());
  for (std::size_t i = 0; i < errors_sq.size(); ++i)
    ordered[i] = {variances[i], errors_sq[i]};
  std::sort(ordered.begin(), ordered.end());
  std::vector<double> prefix(ordered.size() + 1, 0.0);
  for (std::size_t i = 0; i < ordered.size(); ++i)
    prefix[i + 1] = prefix[i] + ordered[i].second;

  std::vector<double> sorted_thresholds = thresholds;
  std::sort(sorted_thresholds.begin(), sorted_thresholds.end());

  const double n = static_cast<double>(errors_sq.size());
  std::vector<ErrorVariancePoint> curve;
  curve.reserve(sorted_thresholds.size());
  for (double nu : sorted_thresholds) {
    const auto retained = static_cast<std::size_t>(
        std::upper_bound(ordered.begin(), ordered.end(),
                         std::make_pair(nu, std::numeric_limits<double>::infinity())) -
        ordered.begin());
    const double mse = retained == 0
                           ? std::numeric_limits<double>::quiet_NaN()
                           : prefix[retained] / static_cast<double>(retained);
    curve.push_back({nu, mse, static_cast<double>(retained) / n});
  }
  return curve;
}

}  // namespace icnlm
