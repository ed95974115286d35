#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

#include "copula_model.hpp"
#include "errors.hpp"
#include "hmc.hpp"
#include "marginal.hpp"
#include "normal.hpp"
#include "vi.hpp"

namespace icnlm {

//! Plug-in predictive law at one query: the pseudo-response is modeled as
//! z0 ~ N(m_hat, s_hat^2) and mapped to the response scale through the margin.
struct PredictivePosterior {
  double m_hat = 0.0;
  double s_hat = 1.0;
  const MarginalEstimate* margin = nullptr;
};

namespace detail {

//! Keeps transformed probabilities strictly inside (0, 1) before they are
//! handed to the margin's quantile.
inline double clamp_open_unit(double p) {
  return std::clamp(p, 1e-300, std::nextafter(1.0, 0.0));
}

//! Single-point location and scale (s0 psi^T beta, s0) for one parameter draw.
inline std::pair<double, double> plug_in_location(const BasisMatrix& row,
                                                  const Eigen::VectorXd& psi,
                                                  const PriorSpec& spec,
                                                  const ParamVector& theta) {
  const double s0 = scaling_factors(row, spec, theta).s[0];
  return {s0 * psi.dot(theta.beta), s0};
}

}  // namespace detail

//! Draw-averaged estimators from MCMC output:
//! m_hat = psi^T mean(s0 beta), s_hat = mean(s0).
inline PredictivePosterior posterior_at(const Eigen::VectorXd& x0_basis,
                                        const PosteriorDraws& draws,
                                        const PriorSpec& spec,
                                        const MarginalEstimate& margin) {
  const Eigen::Index p = x0_basis.size();
  if (draws.draws.rows() < 1)
    throw DimensionMismatch("posterior_at: need at least one posterior draw");
  if (draws.draws.cols() != spec.param_dim(p))
    throw DimensionMismatch("posterior_at: draws do not match the basis dimension");
  const BasisMatrix row{x0_basis.transpose()};
  double sum_m = 0.0, sum_s = 0.0;
  for (Eigen::Index j = 0; j < draws.draws.rows(); ++j) {
    const ParamVector theta =
        ParamVector::unflatten(draws.draws.row(j).transpose(), spec, p);
    const auto [m, s] = detail::plug_in_location(row, x0_basis, spec, theta);
    sum_m += m;
    sum_s += s;
  }
  const double n_draws = static_cast<double>(draws.draws.rows());
  return {sum_m / n_draws, sum_s / n_draws, &margin};
}

//! Plug-in estimators at the variational posterior mean.
inline PredictivePosterior posterior_at(const Eigen::VectorXd& x0_basis,
                                        const VariationalFit& fit,
                                        const PriorSpec& spec,
                                        const MarginalEstimate& margin) {
  const Eigen::Index p = x0_basis.size();
  if (fit.params.mu.size() != spec.param_dim(p))
    throw DimensionMismatch(
        "posterior_at: variational mean does not match the basis dimension");
  const BasisMatrix row{x0_basis.transpose()};
  const ParamVector theta = ParamVector::unflatten(fit.params.mu, spec, p);
  const auto [m, s] = detail::plug_in_location(row, x0_basis, spec, theta);
  return {m, s, &margin};
}

//! Predictive density by change of variables from the response to the
//! pseudo-response: [p_Y(y0)/phi1(z0)] phi1((z0 - m_hat)/s_hat)/s_hat.
inline double density(const PredictivePosterior& pp, double y0) {
  const double z0 = pp.margin->z_raw(y0);
  const double py = pp.margin->pdf(y0);
  if (!(py > 0.0) || !std::isfinite(z0)) return 0.0;
  const double u = (z0 - pp.m_hat) / pp.s_hat;
  return std::exp(std::log(py) - norm_logpdf(z0) + norm_logpdf(u) -
                  std::log(pp.s_hat));
}

//! Predictive CDF Phi1((Phi1^-1(F_Y(y0)) - m_hat)/s_hat).
inline double cdf(const PredictivePosterior& pp, double y0) {
  const double z0 = pp.margin->z_raw(y0);
  if (z0 == -std::numeric_limits<double>::infinity()) return 0.0;
  if (z0 == std::numeric_limits<double>::infinity()) return 1.0;
  return norm_cdf((z0 - pp.m_hat) / pp.s_hat);
}

//! Predictive quantile F_Y^-1(Phi1(m_hat + s_hat Phi1^-1(p))): the exact
//! monotone-transform inverse of cdf.
inline double quantile(const PredictivePosterior& pp, double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ProbabilityOutOfRange(
        "predictive quantile: probability must lie strictly in (0, 1)");
  const double inner = norm_cdf(pp.m_hat + pp.s_hat * norm_quantile(p));
  return pp.margin->quantile(detail::clamp_open_unit(inner));
}

//! Central prediction interval (quantile(alpha/2), quantile(1 - alpha/2)).
inline std::pair<double, double> interval(const PredictivePosterior& pp,
                                          double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ProbabilityOutOfRange(
        "prediction interval: alpha must lie strictly in (0, 1)");
  return {quantile(pp, 0.5 * alpha), quantile(pp, 1.0 - 0.5 * alpha)};
}

//! Posterior predictive mean and variance by trapezoid quadrature over
//! z0 in [m_hat - 8 s_hat, m_hat + 8 s_hat]; variance clamped at 0 against
//! quadrature round-off.
inline std::pair<double, double> mean_and_variance(
    const PredictivePosterior& pp,
    std::size_t n_points = MarginalEstimate::kGridPoints) {
  n_points = std::max<std::size_t>(n_points, 2);
  const double lo = pp.m_hat - 8.0 * pp.s_hat;
  const double step = 16.0 * pp.s_hat / static_cast<double>(n_points - 1);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < n_points; ++t) {
    const double z = lo + step * static_cast<double>(t);
    const double w = norm_pdf((z - pp.m_hat) / pp.s_hat) / pp.s_hat;
    const double y =
        pp.margin->quantile(detail::clamp_open_unit(norm_cdf(z)));
    const double cw = (t == 0 || t + 1 == n_points) ? 0.5 : 1.0;
    m1 += cw * w * y;
    m2 += cw * w * y * y;
  }
  m1 *= step;
  m2 *= step;
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

}  // namespace icnlm
