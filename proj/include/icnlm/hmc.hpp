#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>

#include "copula_model.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace icnlm {

//! Chain configuration. mass_diag empty means identity mass.
struct HmcSettings {
  std::size_t n_burnin = 2000;
  std::size_t n_keep = 10000;
  std::size_t leapfrog_steps = 50;
  double initial_step = 0.1;
  double target_accept = 0.8;
  Eigen::VectorXd mass_diag;
  std::uint64_t seed = 1;
};

//! Retained iterates (one row per kept draw), the acceptance rate over the
//! kept phase, and per-coordinate effective sample sizes.
struct PosteriorDraws {
  Eigen::MatrixXd draws;
  double accept_rate = 0.0;
  Eigen::VectorXd ess;
};

using LogDensity = std::function<double(const Eigen::VectorXd&)>;
using LogDensityGrad = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

//! Effective sample size by the initial-positive-sequence rule: sum paired
//! autocorrelations Gamma_m = rho_2m + rho_2m+1 until the first nonpositive
//! pair. Can exceed the chain length for antithetic chains.
inline double effective_sample_size(const Eigen::VectorXd& chain) {
  const Eigen::Index n = chain.size();
  if (n < 2) return static_cast<double>(n);
  const Eigen::VectorXd c = chain.array() - chain.mean();
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  if (!(c0 > 0.0)) return static_cast<double>(n);
  const auto gamma = [&](Eigen::Index lag) {
    if (lag >= n) return 0.0;
    return c.head(n - lag).dot(c.tail(n - lag)) / static_cast<double>(n);
  };
  double iact = -1.0;
  for (Eigen::Index m = 0; 2 * m + 1 < n; ++m) {
    const double pair = (gamma(2 * m) + gamma(2 * m + 1)) / c0;
    if (pair <= 0.0) break;
    iact += 2.0 * pair;
  }
  iact = std::max(iact, 1e-12);
  return static_cast<double>(n) / iact;
}

//! Half-kick / drift / half-kick composition repeated `steps` times over the
//! log density whose gradient is supplied. inv_mass empty means identity.
//! Throws NonFiniteTrajectory as soon as any coordinate stops being finite.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(
    Eigen::VectorXd position, Eigen::VectorXd momentum, double step,
    std::size_t steps, const LogDensityGrad& gradient,
    const Eigen::VectorXd& inv_mass = Eigen::VectorXd()) {
  if (steps == 0) return {std::move(position), std::move(momentum)};
  const auto check = [](const Eigen::VectorXd& v) {
    if (!v.allFinite())
      throw NonFiniteTrajectory("leapfrog: trajectory left the finite domain");
  };
  const auto drift = [&](const Eigen::VectorXd& mom) {
    if (inv_mass.size() == 0) return mom;
    return Eigen::VectorXd((mom.array() * inv_mass.array()).matrix());
  };
  momentum += 0.5 * step * gradient(position);
  check(momentum);
  for (std::size_t k = 0; k < steps; ++k) {
    position += step * drift(momentum);
    check(position);
    if (k + 1 < steps) {
      momentum += step * gradient(position);
      check(momentum);
    }
  }
  momentum += 0.5 * step * gradient(position);
  check(momentum);
  return {std::move(position), std::move(momentum)};
}

//! Structured-parameter overload; the gradient evaluator still acts on the
//! flattened block.
inline std::pair<ParamVector, Eigen::VectorXd> leapfrog(
    const ParamVector& position, const Eigen::VectorXd& momentum, double step,
    std::size_t steps, const LogDensityGrad& gradient,
    const Eigen::VectorXd& inv_mass = Eigen::VectorXd()) {
  auto [flat, mom] =
      leapfrog(position.flatten(), momentum, step, steps, gradient, inv_mass);
  ParamVector out{flat.head(position.beta.size()), flat.tail(position.hyper.size())};
  return {std::move(out), std::move(mom)};
}

namespace detail {

inline void check_settings(const HmcSettings& s, Eigen::Index dim) {
  if (s.n_keep < 1) throw SpecMismatch("hmc: n_keep must be at least 1");
  if (s.leapfrog_steps < 1) throw SpecMismatch("hmc: leapfrog_steps must be at least 1");
  if (!(s.initial_step > 0.0)) throw SpecMismatch("hmc: initial_step must be positive");
  if (!(s.target_accept > 0.0 && s.target_accept < 1.0))
    throw SpecMismatch("hmc: target_accept must lie in (0, 1)");
  if (s.mass_diag.size() != 0) {
    if (s.mass_diag.size() != dim)
      throw SpecMismatch("hmc: mass_diag length does not match parameter dimension");
    if (!(s.mass_diag.array() > 0.0).all())
      throw SpecMismatch("hmc: mass_diag entries must be positive");
  }
}

}  // namespace detail

//! Samples an arbitrary unnormalized target, starting from the origin.
//! Burn-in adapts the step size by dual averaging toward target_accept; the
//! kept phase runs at the frozen averaged step. Deterministic given the seed.
inline PosteriorDraws sample_target(const LogDensity& log_density,
                                    const LogDensityGrad& gradient, Eigen::Index dim,
                                    const HmcSettings& settings) {
  detail::check_settings(settings, dim);
  Rng rng(settings.seed);
  const Eigen::VectorXd mass = settings.mass_diag.size()
                                   ? settings.mass_diag
                                   : Eigen::VectorXd::Ones(dim);
  const Eigen::VectorXd inv_mass = mass.cwiseInverse();
  const Eigen::VectorXd sqrt_mass = mass.cwiseSqrt();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  double lp = log_density(x);
  if (!std::isfinite(lp))
    throw NonFiniteTrajectory("hmc: log density not finite at the initial point");

  // dual averaging (burn-in only)
  double eps = settings.initial_step;
  const double mu_da = std::log(10.0 * settings.initial_step);
  const double t0 = 10.0, gamma_da = 0.05, kappa = 0.75;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;

  PosteriorDraws out;
  out.draws.resize(static_cast<Eigen::Index>(settings.n_keep), dim);
  std::size_t accepted_keep = 0;

  const std::size_t total = settings.n_burnin + settings.n_keep;
  for (std::size_t iter = 0; iter < total; ++iter) {
    Eigen::VectorXd mom(dim);
    for (Eigen::Index j = 0; j < dim; ++j) mom[j] = sqrt_mass[j] * rng.gaussian();
    // +-20% step jitter breaks trajectory periodicity on near-quadratic targets
    const double eps_used = eps * (0.8 + 0.4 * rng.uniform());

    double alpha = 0.0;
    bool accepted = false;
    try {
      auto [x2, mom2] =
          leapfrog(x, mom, eps_used, settings.leapfrog_steps, gradient, inv_mass);
      const double lp2 = log_density(x2);
      const double kin0 = 0.5 * (mom.array().square() * inv_mass.array()).sum();
      const double kin1 = 0.5 * (mom2.array().square() * inv_mass.array()).sum();
      const double log_alpha = (lp2 - kin1) - (lp - kin0);
      if (std::isfinite(log_alpha)) {
        alpha = std::min(1.0, std::exp(log_alpha));
        if (rng.uniform() < alpha) {
          x = std::move(x2);
          lp = lp2;
          accepted = true;
        }
      }
    } catch (const NonFiniteTrajectory&) {
      // divergence: rejected proposal, alpha stays 0
    }

    if (iter < settings.n_burnin) {
      const double m = static_cast<double>(iter + 1);
      h_bar += (settings.target_accept - alpha - h_bar) / (m + t0);
      const double log_eps = mu_da - std::sqrt(m) / gamma_da * h_bar;
      const double w = std::pow(m, -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      eps = (iter + 1 == settings.n_burnin) ? std::exp(log_eps_bar) : std::exp(log_eps);
    } else {
      if (accepted) ++accepted_keep;
      out.draws.row(static_cast<Eigen::Index>(iter - settings.n_burnin)) = x;
    }
  }

  out.accept_rate =
      static_cast<double>(accepted_keep) / static_cast<double>(settings.n_keep);
  if (out.accept_rate < 0.01)
    throw AdaptationFailure("hmc: acceptance rate collapsed below 1% after burn-in");
  out.ess.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    out.ess[j] = effective_sample_size(out.draws.col(j));
  return out;
}

//! Samples the engine posterior over the transformed parameter block.
inline PosteriorDraws sample(const Eigen::VectorXd& z, const BasisMatrix& B,
                             const PriorSpec& spec, const HmcSettings& settings) {
  const Eigen::Index p = B.p();
  const LogDensity lp = [&z, &B, &spec, p](const Eigen::VectorXd& theta) {
    return log_posterior_unnorm(z, B, spec, ParamVector::unflatten(theta, spec, p));
  };
  const LogDensityGrad grad = [&z, &B, &spec, p](const Eigen::VectorXd& theta) {
    return grad_log_posterior(z, B, spec, ParamVector::unflatten(theta, spec, p));
  };
  return sample_target(lp, grad, spec.param_dim(p), settings);
}

}  // namespace icnlm
