#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "normal.hpp"

namespace icnlm {

//! Design matrix of basis features, one observation per row.
struct BasisMatrix {
  Eigen::MatrixXd values;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }
};

//! Validates ingestion invariants: finite entries, no all-zero column.
inline BasisMatrix make_basis(Eigen::MatrixXd values) {
  if (values.rows() < 1 || values.cols() < 1)
    throw ShapeError("basis matrix must have at least one row and one column");
  if (!values.allFinite())
    throw NonFiniteValue("basis matrix contains a non-finite entry");
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    if ((values.col(j).array() == 0.0).all())
      throw ZeroColumn("basis column " + std::to_string(j + 1) +
                       " is identically zero; its weight would be unidentified");
  }
  return BasisMatrix{std::move(values)};
}

enum class PriorKind { ridge, horseshoe };

//! Shrinkage prior selector. nu is the Weibull scale of the ridge variance
//! hyperprior tau^2 ~ WB(1/2, nu) and is ignored under the horseshoe.
struct PriorSpec {
  PriorKind kind = PriorKind::ridge;
  double nu = 2.5;

  Eigen::Index hyper_dim(Eigen::Index p) const {
    return kind == PriorKind::ridge ? 1 : p + 1;
  }
  Eigen::Index param_dim(Eigen::Index p) const { return p + hyper_dim(p); }
};

//! Working parameter block in the transformed (unconstrained) space.
//! hyper = (log tau^2) under ridge, (log lambda_1^2, ..., log lambda_p^2, log tau)
//! under the horseshoe.
struct ParamVector {
  Eigen::VectorXd beta;
  Eigen::VectorXd hyper;

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(beta.size() + hyper.size());
    out << beta, hyper;
    return out;
  }

  static ParamVector unflatten(const Eigen::VectorXd& theta, const PriorSpec& spec,
                               Eigen::Index p) {
    if (theta.size() != spec.param_dim(p))
      throw SpecMismatch("parameter vector length inconsistent with prior spec");
    return ParamVector{theta.head(p), theta.tail(spec.hyper_dim(p))};
  }
};

//! Per-observation scaling factors s_i in (0, 1].
struct ScalingVector {
  Eigen::VectorXd s;
};

namespace detail {

inline void check_params(const PriorSpec& spec, const ParamVector& params) {
  if (params.hyper.size() != spec.hyper_dim(params.beta.size()))
    throw SpecMismatch("hyperparameter block length inconsistent with prior spec");
}

}  // namespace detail

//! Diagonal of the inverted prior precision P(theta)^-1, which is the prior
//! covariance diagonal of beta: tau^2 * 1 under ridge,
//! (lambda_1^2, ..., lambda_p^2) under the horseshoe.
inline Eigen::VectorXd precision_diag(const PriorSpec& spec, const ParamVector& params) {
  detail::check_params(spec, params);
  const Eigen::Index p = params.beta.size();
  if (spec.kind == PriorKind::ridge)
    return Eigen::VectorXd::Constant(p, std::exp(params.hyper[0]));
  return params.hyper.head(p).array().exp().matrix();
}

//! s_i = (1 + psi_i^T P(theta)^-1 psi_i)^(-1/2), O(n p) total.
inline ScalingVector scaling_factors(const BasisMatrix& B, const PriorSpec& spec,
                                     const ParamVector& params) {
  if (params.beta.size() != B.p())
    throw SpecMismatch("beta length does not match basis column count");
  const Eigen::VectorXd v = precision_diag(spec, params);
  const Eigen::VectorXd q = B.values.array().square().matrix() * v;
  return ScalingVector{(1.0 + q.array()).rsqrt().matrix()};
}

//! Gaussian factor of the conditional likelihood:
//! sum_i [ -0.5 log(2 pi) - log s_i - 0.5 ((z_i - s_i psi_i^T beta)/s_i)^2 ].
//! The parameter-free data Jacobian prod p_Y(y_i)/phi1(z_i) is excluded.
inline double log_conditional_likelihood(const Eigen::VectorXd& z, const BasisMatrix& B,
                                         const PriorSpec& spec, const ParamVector& params) {
  if (z.size() != B.n())
    throw LengthMismatch("pseudo-response length does not match basis row count");
  if (params.beta.size() != B.p())
    throw SpecMismatch("beta length does not match basis column count");
  const Eigen::VectorXd v = precision_diag(spec, params);
  const Eigen::ArrayXd q = (B.values.array().square().matrix() * v).array();
  const Eigen::ArrayXd t = (1.0 + q).sqrt();  // 1/s_i
  const Eigen::ArrayXd resid = z.array() * t - (B.values * params.beta).array();
  const double n = static_cast<double>(B.n());
  return -0.5 * n * kLog2Pi + 0.5 * q.log1p().sum() - 0.5 * resid.square().sum();
}

//! log N(beta; 0, P^-1) + log hyperprior + log-Jacobians of the transforms.
inline double log_prior(const PriorSpec& spec, const ParamVector& params) {
  detail::check_params(spec, params);
  const Eigen::Index p = params.beta.size();
  const double pd = static_cast<double>(p);
  if (spec.kind == PriorKind::ridge) {
    const double eta = params.hyper[0];
    const double tau2 = std::exp(eta);
    // beta | tau^2 ~ N(0, tau^2 I)
    double lp = -0.5 * pd * kLog2Pi - 0.5 * pd * eta -
                params.beta.squaredNorm() / (2.0 * tau2);
    // tau^2 ~ WB(1/2, nu) in eta = log tau^2, Jacobian e^eta
    const double a = 0.5;
    lp += std::log(a / spec.nu) + (a - 1.0) * (eta - std::log(spec.nu)) -
          std::sqrt(tau2 / spec.nu) + eta;
    return lp;
  }
  const Eigen::ArrayXd etas = params.hyper.head(p).array();
  const double etat = params.hyper[p];
  const Eigen::ArrayXd v = etas.exp();  // lambda_j^2
  const double tau = std::exp(etat);
  const double tau2 = tau * tau;
  // beta | lambda ~ N(0, diag(lambda^2))
  double lp = -0.5 * pd * kLog2Pi - 0.5 * etas.sum() -
              (params.beta.array().square() / (2.0 * v)).sum();
  // lambda_j | tau ~ Half-Cauchy(0, tau) in eta_j = log lambda_j^2 (the log 2
  // of the density cancels against the Jacobian lambda_j/2)
  lp += pd * (std::log(tau) - std::log(M_PI)) - (tau2 + v).log().sum() +
        0.5 * etas.sum();
  // tau ~ Half-Cauchy(0, 1) in eta_tau = log tau, Jacobian tau
  lp += std::log(2.0 / M_PI) - std::log1p(tau2) + etat;
  return lp;
}

//! Unnormalized log posterior over the transformed parameter block.
inline double log_posterior_unnorm(const Eigen::VectorXd& z, const BasisMatrix& B,
                                   const PriorSpec& spec, const ParamVector& params) {
  return log_conditional_likelihood(z, B, spec, params) + log_prior(spec, params);
}

//! Exact analytic gradient of log_posterior_unnorm with respect to the
//! flattened (beta, hyper) block, including the dependence of s_i on the
//! hyperparameters.
inline Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& z, const BasisMatrix& B,
                                          const PriorSpec& spec, const ParamVector& params) {
  if (z.size() != B.n())
    throw LengthMismatch("pseudo-response length does not match basis row count");
  if (params.beta.size() != B.p())
    throw SpecMismatch("beta length does not match basis column count");
  detail::check_params(spec, params);
  const Eigen::Index p = B.p();
  const Eigen::VectorXd v = precision_diag(spec, params);
  const Eigen::MatrixXd B2 = B.values.array().square();
  const Eigen::ArrayXd q = (B2 * v).array();
  const Eigen::ArrayXd t = (1.0 + q).sqrt();
  const Eigen::ArrayXd resid = z.array() * t - (B.values * params.beta).array();

  // d loglik / d q_i, shared by both priors
  const Eigen::ArrayXd w = 0.5 / (1.0 + q) - 0.5 * z.array() * resid / t;

  Eigen::VectorXd grad(spec.param_dim(p));
  grad.head(p) = B.values.transpose() * resid.matrix() -
                 (params.beta.array() / v.array()).matrix();

  if (spec.kind == PriorKind::ridge) {
    const double eta = params.hyper[0];
    const double tau2 = std::exp(eta);
    // dq_i/d eta = q_i under the common variance
    double g = (q * w).sum();
    g += -0.5 * static_cast<double>(p) + params.beta.squaredNorm() / (2.0 * tau2);
    g += 0.5 - 0.5 * std::sqrt(tau2 / spec.nu);
    grad[p] = g;
    return grad;
  }

  const double etat = params.hyper[p];
  const double tau = std::exp(etat);
  const double tau2 = tau * tau;
  // dq_i/d eta_j = v_j psi_ij^2
  Eigen::ArrayXd glam = (B2.transpose() * w.matrix()).array() * v.array();
  glam += params.beta.array().square() / (2.0 * v.array()) -
          v.array() / (tau2 + v.array());
  grad.segment(p, p) = glam.matrix();
  grad[2 * p] = static_cast<double>(p) - 2.0 * tau2 * (1.0 / (tau2 + v.array())).sum() +
                1.0 - 2.0 * tau2 / (1.0 + tau2);
  return grad;
}

}  // namespace icnlm
