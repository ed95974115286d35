#pragma once

// Independent reference implementations used to pin expected values in tests.
// Everything here is written in the most direct form possible, trading speed
// for obviousness, and deliberately shares no code with the library under test.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

inline double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Brute-force Gaussian KDE density: (1/(n h)) sum_i phi((y - y_i)/h).
inline double kde_pdf(const std::vector<double>& ys, double h, double y) {
  double acc = 0.0;
  for (double yi : ys) acc += phi((y - yi) / h);
  return acc / (static_cast<double>(ys.size()) * h);
}

// Brute-force Gaussian KDE distribution function: (1/n) sum_i Phi((y - y_i)/h).
inline double kde_cdf(const std::vector<double>& ys, double h, double y) {
  double acc = 0.0;
  for (double yi : ys) acc += Phi((y - yi) / h);
  return acc / static_cast<double>(ys.size());
}

// Bisection inverse of an increasing function f on [lo, hi]; assumes the
// target is bracketed. Runs to near machine width.
template <class F>
double invert_monotone(F f, double target, double lo, double hi) {
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Kolmogorov-Smirnov statistic of a sample against a continuous cdf.
template <class F>
double ks_statistic(std::vector<double> xs, F cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double u = cdf(xs[i]);
    d = std::max(d, std::abs(u - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - u));
  }
  return d;
}

inline double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: bad sizes");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Central finite difference of a scalar field along coordinate j.
inline double central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                           Eigen::VectorXd x, Eigen::Index j, double step) {
  const double saved = x[j];
  x[j] = saved + step;
  const double up = f(x);
  x[j] = saved - step;
  const double down = f(x);
  x[j] = saved;
  return (up - down) / (2.0 * step);
}

// Dense multivariate normal log density via full LLT factorization.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = x.size();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::runtime_error("mvn_logpdf: not SPD");
  const Eigen::VectorXd half = llt.matrixL().solve(x - mu);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * static_cast<double>(p) * std::log(2.0 * M_PI) - 0.5 * logdet -
         0.5 * half.squaredNorm();
}

// Conjugate Gaussian posterior of the weight block for fixed prior variances v:
// precision Lambda = B^T B + diag(1/v), mean Lambda^{-1} B^T (z .* t) with
// t_i = sqrt(1 + sum_j v_j psi_ij^2), covariance Lambda^{-1}.
struct ConjugatePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline ConjugatePosterior conjugate_posterior(const Eigen::MatrixXd& B,
                                              const Eigen::VectorXd& z,
                                              const Eigen::VectorXd& v) {
  const Eigen::VectorXd q = B.array().square().matrix() * v;
  const Eigen::VectorXd zt = z.array() * (1.0 + q.array()).sqrt();
  Eigen::MatrixXd lambda = B.transpose() * B;
  lambda.diagonal() += v.cwiseInverse();
  const Eigen::MatrixXd cov = lambda.llt().solve(
      Eigen::MatrixXd::Identity(B.cols(), B.cols()));
  return ConjugatePosterior{cov * (B.transpose() * zt), cov};
}

// Unnormalized Gaussian target log h(x) = c - (x-m)^T L (x-m) / 2, with its
// exact evidence and the closed-form ELBO of a Gaussian q = N(mu, sigma)
// against it:
//   ELBO = E_q[log h - log q]
//        = c - (tr(L sigma) + (mu-m)^T L (mu-m)) / 2 + log det(2 pi e sigma) / 2.
struct GaussianTarget {
  double c;
  Eigen::VectorXd m;
  Eigen::MatrixXd lambda;

  double log_h(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = x - m;
    return c - 0.5 * r.dot(lambda * r);
  }
  Eigen::VectorXd grad_log_h(const Eigen::VectorXd& x) const {
    return -lambda * (x - m);
  }
  double evidence() const {
    const Eigen::Index p = m.size();
    return c + 0.5 * static_cast<double>(p) * std::log(2.0 * M_PI) -
           0.5 * std::log(lambda.determinant());
  }
};

inline double gaussian_elbo(const GaussianTarget& t, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = mu.size();
  const Eigen::VectorXd r = mu - t.m;
  const double entropy =
      0.5 * static_cast<double>(p) * std::log(2.0 * M_PI * std::exp(1.0)) +
      0.5 * std::log(sigma.determinant());
  return t.c - 0.5 * ((t.lambda * sigma).trace() + r.dot(t.lambda * r)) + entropy;
}

// Exact ELBO gradient blocks for q = N(mu, U U^T + diag(d)^2) against the
// Gaussian target above: d/dmu = -L (mu - m); d/dU = (sigma^-1 - L) U with
// above-diagonal entries zeroed; d/dd = diag(sigma^-1 - L) .* d.
struct GaussianElboGrad {
  Eigen::VectorXd d_mu;
  Eigen::MatrixXd d_factor;
  Eigen::VectorXd d_diag;
};

inline GaussianElboGrad gaussian_elbo_grad(const GaussianTarget& t,
                                           const Eigen::VectorXd& mu,
                                           const Eigen::MatrixXd& factor,
                                           const Eigen::VectorXd& diag) {
  const Eigen::Index p = mu.size(), k = factor.cols();
  Eigen::MatrixXd sigma = factor * factor.transpose();
  sigma.diagonal() += diag.array().square().matrix();
  const Eigen::MatrixXd sigma_inv =
      sigma.llt().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd gap = sigma_inv - t.lambda;
  GaussianElboGrad g;
  g.d_mu = -t.lambda * (mu - t.m);
  g.d_factor = gap * factor;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < j && i < p; ++i) g.d_factor(i, j) = 0.0;
  g.d_diag = (gap.diagonal().array() * diag.array()).matrix();
  return g;
}

}  // namespace oracle
