#pragma once

#include <cmath>
#include <limits>

#include "errors.hpp"

namespace icnlm {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

//! Standard normal density.
inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

//! Standard normal log-density.
inline double norm_logpdf(double x) { return -0.5 * x * x - 0.5 * kLog2Pi; }

//! Standard normal CDF, accurate in both tails.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace detail {

inline double polyval(const double* c, int n, double x) {
  double r = c[n - 1];
  for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace detail

//! Standard normal quantile (inverse CDF), algorithm AS 241 (PPND16).
//! Relative accuracy about 1e-15 over the full open unit interval.
inline double norm_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ProbabilityOutOfRange("norm_quantile: probability outside [0, 1]");
  }
  static constexpr double a[8] = {
      3.3871328727963666080e+0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
      1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3};
  static constexpr double b[8] = {
      1.0,                      4.2313330701600911252e+1, 6.8718700749205790830e+2,
      5.3941960214247511077e+3, 2.1213794301586595867e+4, 3.9307895800092710610e+4,
      2.8729085735721942674e+4, 5.2264952788528545610e+3};
  static constexpr double c[8] = {
      1.42343711074968357734e+0, 4.63033784615654529590e+0, 5.76949722146069140550e+0,
      3.64784832476320460504e+0, 1.27045825245236838258e+0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static constexpr double d[8] = {
      1.0,                       2.05319162663775882187e+0, 1.67638483018380384940e+0,
      6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static constexpr double e[8] = {
      6.65790464350110377720e+0, 5.46378491116411436990e+0, 1.78482653991729133580e+0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[8] = {
      1.0,                       5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * detail::polyval(a, 8, r) / detail::polyval(b, 8, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = detail::polyval(c, 8, r) / detail::polyval(d, 8, r);
  } else {
    r -= 5.0;
    v = detail::polyval(e, 8, r) / detail::polyval(f, 8, r);
  }
  return q < 0.0 ? -v : v;
}

}  // namespace icnlm
