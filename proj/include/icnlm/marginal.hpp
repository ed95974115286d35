#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "normal.hpp"
#include "stats.hpp"

namespace icnlm {

//! Gaussian-kernel KDE of the response margin with exact density/CDF/quantile
//! evaluation and the normal-score transform z = Phi1^-1(F_Y(y)).
//!
//! The public cdf() is clamped to [eps, 1-eps] so that to_pseudo() always
//! returns finite pseudo-responses. The unclamped kernel-mixture CDF stays
//! available through cdf_raw() / z_raw(); quantile() inverts the unclamped
//! CDF so the roundtrip holds over the whole support.
class MarginalEstimate {
 public:
  static constexpr double kDefaultClamp = 1e-7;
  //! Kernel contributions beyond this many bandwidths are saturated (<1e-22).
  static constexpr double kKernelCutoff = 10.0;
  //! Default evaluation-grid resolution shared with predictive quadrature.
  static constexpr std::size_t kGridPoints = 2001;

  //! Precomputed evaluation grid over the extended support.
  struct SupportGrid {
    std::vector<double> y;    //!< equispaced abscissae
    std::vector<double> cdf;  //!< unclamped CDF values
    std::vector<double> pdf;  //!< density values
    std::vector<double> z;    //!< normal scores Phi1^-1(cdf)
  };

  //! Takes ownership of the sample; sorts it. Throws EmptySample (n < 2),
  //! DegenerateSample (all values equal) or NonPositiveBandwidth.
  MarginalEstimate(std::vector<double> sample, double bandwidth,
                   double support_clamp = kDefaultClamp)
      : sample_(std::move(sample)), h_(bandwidth), clamp_(support_clamp) {
    if (sample_.empty()) throw EmptySample("fit_kde: need at least two observations");
    std::sort(sample_.begin(), sample_.end());
    // covers n = 1: a single value is degenerate, not empty
    if (sample_.front() == sample_.back())
      throw DegenerateSample("fit_kde: sample has no two distinct values");
    if (!(h_ > 0.0)) throw NonPositiveBandwidth("fit_kde: bandwidth must be positive");
    if (!(clamp_ > 0.0 && clamp_ < 0.5))
      throw ProbabilityOutOfRange("fit_kde: support clamp must lie in (0, 0.5)");
    grid_ = make_support_grid(kGridPoints);
  }

  const std::vector<double>& sample() const { return sample_; }
  double bandwidth() const { return h_; }
  double support_clamp() const { return clamp_; }
  double support_lo() const { return sample_.front() - kKernelCutoff * h_; }
  double support_hi() const { return sample_.back() + kKernelCutoff * h_; }
  const SupportGrid& support_grid() const { return grid_; }

  //! Kernel mixture density (1/(n h)) sum_i phi((y - y_i)/h).
  double pdf(double y) const {
    const auto [lo, hi] = window(y);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += norm_pdf((y - sample_[i]) / h_);
    return s / (static_cast<double>(sample_.size()) * h_);
  }

  //! Unclamped kernel mixture CDF (1/n) sum_i Phi((y - y_i)/h), in (0, 1).
  double cdf_raw(double y) const {
    const auto [lo, hi] = window(y);
    double s = static_cast<double>(lo);  // kernels fully below the window
    for (std::size_t i = lo; i < hi; ++i) s += norm_cdf((y - sample_[i]) / h_);
    return s / static_cast<double>(sample_.size());
  }

  //! Upper-tail complement 1 - cdf_raw(y), computed without cancellation.
  double ccdf_raw(double y) const {
    const auto [lo, hi] = window(y);
    double s = static_cast<double>(sample_.size() - hi);  // kernels fully above
    for (std::size_t i = lo; i < hi; ++i) s += norm_cdf((sample_[i] - y) / h_);
    return s / static_cast<double>(sample_.size());
  }

  //! CDF clamped to [eps, 1-eps].
  double cdf(double y) const {
    return std::clamp(cdf_raw(y), clamp_, 1.0 - clamp_);
  }

  //! Normal score Phi1^-1(cdf_raw(y)), evaluated through the smaller tail so
  //! it stays accurate far outside the sample.
  double z_raw(double y) const {
    const double p = cdf_raw(y);
    if (p <= 0.5) return norm_quantile(p);
    return -norm_quantile(ccdf_raw(y));
  }

  //! Inverse of the unclamped CDF; |cdf(y*) - p| <= 1e-10. Brackets from the
  //! precomputed grid, then runs Newton steps safeguarded by bisection.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0))
      throw ProbabilityOutOfRange("quantile: probability must lie strictly in (0, 1)");
    double lo, hi;
    if (p >= grid_.cdf.front() && p <= grid_.cdf.back()) {
      const auto it = std::lower_bound(grid_.cdf.begin(), grid_.cdf.end(), p);
      const std::size_t j =
          it == grid_.cdf.begin()
              ? 0
              : static_cast<std::size_t>(it - grid_.cdf.begin()) - 1;
      lo = grid_.y[j];
      hi = grid_.y[std::min(j + 1, grid_.y.size() - 1)];
    } else {
      lo = support_lo();
      hi = support_hi();
      double width = hi - lo;
      while (cdf_raw(lo) > p) { lo -= width; width *= 2.0; }
      while (cdf_raw(hi) < p) { hi += width; width *= 2.0; }
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 220; ++it) {
      const double f = cdf_raw(x);
      // tighter than the contract's 1e-10 so the inverse is sharp in y even
      // where the density is small
      if (std::abs(f - p) <= 1e-12) return x;
      if (f < p) lo = x; else hi = x;
      if (hi - lo <= 1e-14 * std::max(1.0, std::abs(lo) + std::abs(hi))) break;
      const double d = pdf(x);
      double next = d > 0.0 ? x - (f - p) / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      x = next;
    }
    return 0.5 * (lo + hi);
  }

  //! Pseudo-responses z_i = Phi1^-1(clamped cdf(y_i)); always finite.
  std::vector<double> to_pseudo(const std::vector<double>& y) const {
    std::vector<double> z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) z[i] = norm_quantile(cdf(y[i]));
    return z;
  }

  //! Evaluates cdf_raw/pdf/z on an equispaced grid over the extended support.
  SupportGrid make_support_grid(std::size_t points) const {
    SupportGrid g;
    g.y.resize(points);
    g.cdf.resize(points);
    g.pdf.resize(points);
    g.z.resize(points);
    const double lo = support_lo();
    const double step = (support_hi() - lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
      const double y = lo + step * static_cast<double>(i);
      g.y[i] = y;
      g.cdf[i] = cdf_raw(y);
      g.pdf[i] = pdf(y);
      g.z[i] = z_raw(y);
    }
    return g;
  }

 private:
  //! Index range of sample points within the kernel cutoff of y.
  std::pair<std::size_t, std::size_t> window(double y) const {
    const auto first = std::lower_bound(sample_.begin(), sample_.end(),
                                        y - kKernelCutoff * h_);
    const auto last = std::upper_bound(first, sample_.end(), y + kKernelCutoff * h_);
    return {static_cast<std::size_t>(first - sample_.begin()),
            static_cast<std::size_t>(last - sample_.begin())};
  }

  std::vector<double> sample_;
  double h_;
  double clamp_;
  SupportGrid grid_;
};

//! Silverman's rule of thumb 0.9 min(sd, IQR/1.34) n^(-1/5).
//! Falls back to the sd alone when the IQR degenerates to zero.
inline double silverman_bandwidth(const std::vector<double>& y) {
  if (y.size() < 2) throw EmptySample("silverman_bandwidth: need at least two observations");
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  const double sd = sample_sd(y);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  return 0.9 * spread * std::pow(static_cast<double>(y.size()), -0.2);
}

//! Fits the margin; bandwidth defaults to Silverman's rule.
inline MarginalEstimate fit_kde(const std::vector<double>& y,
                                std::optional<double> bandwidth = std::nullopt,
                                double support_clamp = MarginalEstimate::kDefaultClamp) {
  if (y.empty()) throw EmptySample("fit_kde: need at least two observations");
  if (bandwidth && !(*bandwidth > 0.0))
    throw NonPositiveBandwidth("fit_kde: bandwidth must be positive");
  const bool degenerate = std::all_of(y.begin(), y.end(),
                                      [&](double v) { return v == y.front(); });
  if (degenerate) throw DegenerateSample("fit_kde: sample has no two distinct values");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(y);
  return MarginalEstimate(y, h, support_clamp);
}

}  // namespace icnlm
