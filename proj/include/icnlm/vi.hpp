#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "copula_model.hpp"
#include "errors.hpp"
#include "hmc.hpp"
#include "rng.hpp"

namespace icnlm {

//! Parameters of the factored Gaussian family q = N(mu, factor factor^T + diag^2).
//! factor is p x k with entries above the diagonal fixed at zero; diag is
//! unconstrained in sign (only its square enters the covariance).
struct VariationalParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd factor;
  Eigen::VectorXd diag;

  Eigen::Index dim() const { return mu.size(); }
  Eigen::Index rank() const { return factor.cols(); }

  //! Free-parameter count: mu, the on-and-below-diagonal factor entries
  //! stacked column-major, then diag.
  Eigen::Index packed_size() const {
    const Eigen::Index p = dim(), k = rank();
    return 2 * p + p * k - k * (k - 1) / 2;
  }

  Eigen::VectorXd pack() const {
    const Eigen::Index p = dim(), k = rank();
    Eigen::VectorXd out(packed_size());
    out.head(p) = mu;
    Eigen::Index pos = p;
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = j; i < p; ++i) out[pos++] = factor(i, j);
    out.tail(p) = diag;
    return out;
  }

  static VariationalParams unpack(const Eigen::VectorXd& packed, Eigen::Index p,
                                  Eigen::Index k) {
    VariationalParams lambda{Eigen::VectorXd(p), Eigen::MatrixXd::Zero(p, k),
                             Eigen::VectorXd(p)};
    if (packed.size() != lambda.packed_size())
      throw DimensionMismatch("variational parameters: packed length mismatch");
    lambda.mu = packed.head(p);
    Eigen::Index pos = p;
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = j; i < p; ++i) lambda.factor(i, j) = packed[pos++];
    lambda.diag = packed.tail(p);
    return lambda;
  }
};

//! Optimization output: final parameters, the per-iteration noisy ELBO
//! estimates, and whether the moving-average rule declared convergence.
struct VariationalFit {
  VariationalParams params;
  std::vector<double> elbo_trace;
  std::size_t iterations_run = 0;
  bool converged = false;
};

namespace detail {

inline void check_lambda(const VariationalParams& lambda) {
  const Eigen::Index p = lambda.dim(), k = lambda.rank();
  if (k < 1 || k > p)
    throw DimensionMismatch("variational parameters: need 1 <= k <= dim");
  if (lambda.factor.rows() != p || lambda.diag.size() != p)
    throw DimensionMismatch("variational parameters: inconsistent block sizes");
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < j && i < p; ++i)
      if (lambda.factor(i, j) != 0.0)
        throw DimensionMismatch(
            "variational parameters: factor entries above the diagonal must be zero");
}

//! Low-rank quadratic form shared by density and score evaluations:
//! Sigma^-1 = D^-2 - D^-2 U (I + U^T D^-2 U)^-1 U^T D^-2 with U = factor.
struct QForm {
  const VariationalParams* lambda;
  Eigen::VectorXd dinv2;
  Eigen::LLT<Eigen::MatrixXd> cap;  // I + U^T D^-2 U
  double logdet_sigma;

  explicit QForm(const VariationalParams& l) : lambda(&l) {
    check_lambda(l);
    if ((l.diag.array() == 0.0).any())
      throw SingularCovariance(
          "variational covariance: diagonal entries must be nonzero");
    dinv2 = l.diag.array().square().inverse();
    const Eigen::Index k = l.rank();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(k, k);
    c.noalias() += l.factor.transpose() * dinv2.asDiagonal() * l.factor;
    cap.compute(c);
    if (cap.info() != Eigen::Success)
      throw SingularCovariance("variational covariance: capacitance not SPD");
    double logdet_cap = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
      logdet_cap += 2.0 * std::log(cap.matrixL()(i, i));
    logdet_sigma = logdet_cap + l.diag.array().square().log().sum();
  }

  //! Sigma^-1 r at O(p k) after the one-time O(p k^2) setup.
  Eigen::VectorXd solve(const Eigen::VectorXd& r) const {
    const Eigen::VectorXd a = dinv2.asDiagonal() * r;
    const Eigen::VectorXd c = cap.solve(lambda->factor.transpose() * a);
    return a - dinv2.asDiagonal() * (lambda->factor * c);
  }

  double log_density(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd r = theta - lambda->mu;
    const double quad = r.dot(solve(r));
    return -0.5 * static_cast<double>(lambda->dim()) * kLog2Pi -
           0.5 * logdet_sigma - 0.5 * quad;
  }
};

}  // namespace detail

//! Reparameterized draw theta = mu + factor xi + diag (hadamard) delta.
inline Eigen::VectorXd sample_param(const VariationalParams& lambda,
                                    const Eigen::VectorXd& xi,
                                    const Eigen::VectorXd& delta) {
  detail::check_lambda(lambda);
  if (xi.size() != lambda.rank() || delta.size() != lambda.dim())
    throw DimensionMismatch("sample_param: xi must have k entries, delta dim entries");
  return lambda.mu + lambda.factor * xi +
         (lambda.diag.array() * delta.array()).matrix();
}

//! Gaussian log-density of q at theta via the low-rank inverse and the
//! rank-k determinant lemma; O(dim k^2).
inline double log_q(const VariationalParams& lambda, const Eigen::VectorXd& theta) {
  if (theta.size() != lambda.dim())
    throw DimensionMismatch("log_q: point has wrong dimension");
  return detail::QForm(lambda).log_density(theta);
}

//! Score of q at theta: -Sigma^-1 (theta - mu).
inline Eigen::VectorXd grad_log_q(const VariationalParams& lambda,
                                  const Eigen::VectorXd& theta) {
  if (theta.size() != lambda.dim())
    throw DimensionMismatch("grad_log_q: point has wrong dimension");
  return -detail::QForm(lambda).solve(theta - lambda.mu);
}

namespace detail {

//! One shared pass producing the ELBO estimate and/or its packed gradient
//! from the same M reparameterized samples (xi drawn before delta, each
//! sample in turn). Either evaluator may be empty when its output is unused.
struct ElboEstimates {
  double elbo = 0.0;
  Eigen::VectorXd grad;
};

inline ElboEstimates elbo_pass(const VariationalParams& lambda, const LogDensity& logh,
                               const LogDensityGrad& logh_grad, std::size_t n_samples,
                               Rng& rng) {
  if (n_samples < 1) throw SpecMismatch("elbo estimation: need at least one sample");
  const Eigen::Index p = lambda.dim(), k = lambda.rank();
  const QForm qf(lambda);
  const bool want_grad = static_cast<bool>(logh_grad);

  double elbo_acc = 0.0;
  Eigen::VectorXd gm = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd gf = Eigen::MatrixXd::Zero(p, k);
  Eigen::VectorXd gd = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd xi(k), delta(p);
  for (std::size_t m = 0; m < n_samples; ++m) {
    for (Eigen::Index j = 0; j < k; ++j) xi[j] = rng.gaussian();
    for (Eigen::Index i = 0; i < p; ++i) delta[i] = rng.gaussian();
    const Eigen::VectorXd theta =
        lambda.mu + lambda.factor * xi + (lambda.diag.array() * delta.array()).matrix();
    if (logh) elbo_acc += logh(theta) - qf.log_density(theta);
    if (want_grad) {
      // g = grad log h - grad log q, evaluated at the sampled theta
      const Eigen::VectorXd g =
          logh_grad(theta) + qf.solve(theta - lambda.mu);
      gm += g;
      gf.noalias() += g * xi.transpose();
      gd += (g.array() * delta.array()).matrix();
    }
  }

  ElboEstimates out;
  const double inv_m = 1.0 / static_cast<double>(n_samples);
  out.elbo = elbo_acc * inv_m;
  if (want_grad) {
    // pack() reads only the on-and-below-diagonal factor entries, so the
    // unused upper part of gf never leaks into the gradient
    out.grad = VariationalParams{gm * inv_m, gf * inv_m, gd * inv_m}.pack();
  }
  return out;
}

}  // namespace detail

//! Monte-Carlo ELBO estimate from M fresh reparameterized samples.
inline double elbo_estimate(const VariationalParams& lambda, const LogDensity& logh,
                            std::size_t n_samples, std::uint64_t seed) {
  Rng rng(seed);
  return detail::elbo_pass(lambda, logh, LogDensityGrad(), n_samples, rng).elbo;
}

//! Monte-Carlo gradient of the ELBO over the packed (mu, vech(factor), diag)
//! coordinates, using the pathwise estimator with the score correction.
inline Eigen::VectorXd elbo_gradient_estimate(const VariationalParams& lambda,
                                              const LogDensityGrad& logh_grad,
                                              std::size_t n_samples,
                                              std::uint64_t seed) {
  Rng rng(seed);
  return detail::elbo_pass(lambda, LogDensity(), logh_grad, n_samples, rng).grad;
}

//! Per-coordinate learning rates: decaying averages of squared gradients and
//! squared steps (decay 0.95, ridge 1e-6).
struct AdadeltaState {
  Eigen::VectorXd avg_sq_grad;
  Eigen::VectorXd avg_sq_step;
  double decay = 0.95;
  double epsilon = 1e-6;
};

//! One ADADELTA update for gradient ascent: returns the step to add.
inline Eigen::VectorXd adadelta_step(AdadeltaState& state, const Eigen::VectorXd& grad) {
  if (state.avg_sq_grad.size() == 0) {
    state.avg_sq_grad = Eigen::VectorXd::Zero(grad.size());
    state.avg_sq_step = Eigen::VectorXd::Zero(grad.size());
  }
  if (state.avg_sq_grad.size() != grad.size())
    throw DimensionMismatch("adadelta_step: gradient size changed mid-run");
  state.avg_sq_grad = state.decay * state.avg_sq_grad.array() +
                      (1.0 - state.decay) * grad.array().square();
  const Eigen::VectorXd step =
      ((state.avg_sq_step.array() + state.epsilon) /
       (state.avg_sq_grad.array() + state.epsilon))
          .sqrt() *
      grad.array();
  state.avg_sq_step = state.decay * state.avg_sq_step.array() +
                      (1.0 - state.decay) * step.array().square();
  return step;
}

//! Maximizes the ELBO of an arbitrary target over the factored family.
//! Stops when two adjacent disjoint 100-iteration ELBO windows agree to
//! 1e-4 relative, or at max_iter.
inline VariationalFit fit_target(const LogDensity& logh, const LogDensityGrad& logh_grad,
                                 Eigen::Index dim, Eigen::Index k,
                                 std::size_t n_samples, std::size_t max_iter,
                                 std::uint64_t seed) {
  if (k < 1 || k > dim) throw SpecMismatch("vi: need 1 <= k <= parameter dimension");
  if (max_iter < 1) throw SpecMismatch("vi: max_iter must be at least 1");
  if (n_samples < 1) throw SpecMismatch("vi: need at least one sample per iteration");

  VariationalFit fit;
  fit.params = VariationalParams{Eigen::VectorXd::Zero(dim),
                                 Eigen::MatrixXd::Zero(dim, k),
                                 Eigen::VectorXd::Constant(dim, 0.1)};
  AdadeltaState state;
  Rng rng(seed);
  const Eigen::Index p = dim;

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const detail::ElboEstimates est =
        detail::elbo_pass(fit.params, logh, logh_grad, n_samples, rng);
    if (!std::isfinite(est.elbo) || !est.grad.allFinite())
      throw NonFiniteElbo("vi: non-finite ELBO or gradient at iteration " +
                          std::to_string(iter) + " (last finite ELBO " +
                          (fit.elbo_trace.empty()
                               ? std::string("none")
                               : std::to_string(fit.elbo_trace.back())) +
                          ")");
    const Eigen::VectorXd step = adadelta_step(state, est.grad);
    VariationalParams next =
        VariationalParams::unpack(fit.params.pack() + step, p, k);
    // keep the covariance diagonal away from exact zero
    for (Eigen::Index i = 0; i < p; ++i) {
      if (std::abs(next.diag[i]) < 1e-10)
        next.diag[i] = next.diag[i] < 0.0 ? -1e-10 : 1e-10;
    }
    fit.params = std::move(next);
    fit.elbo_trace.push_back(est.elbo);

    const std::size_t t = fit.elbo_trace.size();
    if (t >= 200) {
      const auto mean_over = [&](std::size_t lo, std::size_t hi) {
        return std::accumulate(fit.elbo_trace.begin() + lo,
                               fit.elbo_trace.begin() + hi, 0.0) /
               static_cast<double>(hi - lo);
      };
      const double recent = mean_over(t - 100, t);
      const double previous = mean_over(t - 200, t - 100);
      if (std::abs(recent - previous) < 1e-4 * std::max(1.0, std::abs(recent))) {
        fit.converged = true;
        fit.iterations_run = t;
        return fit;
      }
    }
  }
  fit.iterations_run = fit.elbo_trace.size();
  return fit;
}

//! Variational fit of the engine posterior over the transformed block.
inline VariationalFit fit(const Eigen::VectorXd& z, const BasisMatrix& B,
                          const PriorSpec& spec, Eigen::Index k,
                          std::size_t n_samples = 50, std::size_t max_iter = 10000,
                          std::uint64_t seed = 1) {
  const Eigen::Index p = B.p();
  const LogDensity logh = [&z, &B, &spec, p](const Eigen::VectorXd& theta) {
    return log_posterior_unnorm(z, B, spec, ParamVector::unflatten(theta, spec, p));
  };
  const LogDensityGrad grad = [&z, &B, &spec, p](const Eigen::VectorXd& theta) {
    return grad_log_posterior(z, B, spec, ParamVector::unflatten(theta, spec, p));
  };
  return fit_target(logh, grad, spec.param_dim(p), k, n_samples, max_iter, seed);
}

}  // namespace icnlm
