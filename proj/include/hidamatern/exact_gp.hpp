// Dense O(M^3) GP regression and small numerical oracles used to validate
// the state-space path.

#ifndef HIDAMATERN_EXACT_GP_HPP
#define HIDAMATERN_EXACT_GP_HPP

#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hidamatern/multioutput.hpp"

namespace hidamatern {

using KernelFunction = std::function<double(double)>;  // k(tau), tau >= 0

inline constexpr std::size_t kMaxDenseSize = 5000;

struct DensePosterior {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;
  double log_marginal_likelihood = 0.0;
};

namespace detail {

inline Eigen::MatrixXd gram(const KernelFunction& k, const std::vector<double>& x,
                            const std::vector<double>& y) {
  Eigen::MatrixXd G(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) G(i, j) = k(std::abs(x[i] - y[j]));
  }
  return G;
}

// Cholesky with one-step jitter growth 1e-10 -> 1e-8 -> 1e-6 of the mean diagonal.
inline Eigen::LLT<Eigen::MatrixXd> stable_cholesky(const Eigen::MatrixXd& K) {
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() == Eigen::Success) return llt;
  const double mean_diag = K.diagonal().mean();
  for (double rel : {1e-10, 1e-8, 1e-6}) {
    Eigen::MatrixXd J = K;
    J.diagonal().array() += rel * mean_diag;
    llt.compute(J);
    if (llt.info() == Eigen::Success) {
      std::cerr << "exact_posterior: added jitter " << rel << " x mean diagonal\n";
      return llt;
    }
  }
  std::ostringstream msg;
  msg << "exact_posterior: Gram factorisation failed (condition estimate "
      << condition_number(K) << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace detail

/// Standard GP posterior with Gram K + noise I at `query_times`.
inline DensePosterior exact_posterior(const KernelFunction& k, const std::vector<double>& times,
                                      const std::vector<double>& values, double noise,
                                      const std::vector<double>& query_times) {
  if (times.size() != values.size()) {
    throw std::invalid_argument("exact_posterior: times and values differ in length");
  }
  if (times.size() > kMaxDenseSize) {
    throw std::invalid_argument("exact_posterior: refusing M > 5000 (dense O(M^3))");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("exact_posterior: negative noise");
  const auto m = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd K = detail::gram(k, times, times);
  K.diagonal().array() += noise;
  const auto llt = detail::stable_cholesky(K);
  const Eigen::Map<const Eigen::VectorXd> y(values.data(), m);
  const Eigen::VectorXd alpha = llt.solve(y);

  DensePosterior out;
  out.times = query_times;
  const Eigen::MatrixXd L = llt.matrixL();
  out.log_marginal_likelihood = -0.5 * y.dot(alpha) -
                                L.diagonal().array().log().sum() -
                                0.5 * static_cast<double>(m) * std::log(2.0 * M_PI);
  if (query_times.empty()) return out;
  const Eigen::MatrixXd Ks = detail::gram(k, query_times, times);
  const Eigen::VectorXd mean = Ks * alpha;
  const Eigen::MatrixXd V = llt.matrixL().solve(Ks.transpose());
  for (std::size_t q = 0; q < query_times.size(); ++q) {
    out.mean.push_back(mean(static_cast<Eigen::Index>(q)));
    const double var = k(0.0) - V.col(static_cast<Eigen::Index>(q)).squaredNorm();
    out.variance.push_back(std::max(var, 0.0));
  }
  return out;
}

/// Mean over points of KL(N(m1, v1) || N(m2, v2)).
inline double avg_marginal_kld(const std::vector<double>& mean1,
                               const std::vector<double>& var1,
                               const std::vector<double>& mean2,
                               const std::vector<double>& var2) {
  const std::size_t n = mean1.size();
  if (var1.size() != n || mean2.size() != n || var2.size() != n) {
    throw std::invalid_argument("avg_marginal_kld: length mismatch");
  }
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(var1[i] > 0.0) || !(var2[i] > 0.0)) {
      throw std::invalid_argument("avg_marginal_kld: variances must be positive");
    }
    const double r = var1[i] / var2[i];
    const double d = mean1[i] - mean2[i];
    total += 0.5 * (r + d * d / var2[i] - 1.0 - std::log(r));
  }
  return total / static_cast<double>(n);
}

/// n-th central finite difference with spacing `step`.
inline double fd_derivative(const KernelFunction& k, int n, double tau, double step) {
  if (n < 0) throw std::invalid_argument("fd_derivative: negative order");
  if (n == 0) return k(tau);
  if (!(tau - 0.5 * n * step > 0.0)) {
    throw std::invalid_argument("fd_derivative: stencil crosses the origin");
  }
  double total = 0.0;
  double binom = 1.0;
  for (int i = 0; i <= n; ++i) {
    if (i > 0) binom = binom * (n - i + 1) / i;
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    total += sign * binom * k(tau + (0.5 * n - i) * step);
  }
  return total / std::pow(step, n);
}

}  // namespace hidamatern

#endif  // HIDAMATERN_EXACT_GP_HPP
