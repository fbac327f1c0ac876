// Canonical filters F(u) = sum_k c_k u^{p_k} exp(-mu_k u) and the stationary
// covariance they induce, k(tau) = int_tau^inf F(u) F*(u - tau) du.

#ifndef HIDAMATERN_CANONICAL_FILTER_HPP
#define HIDAMATERN_CANONICAL_FILTER_HPP

#include <cmath>
#include <limits>
#include <complex>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "hidamatern/kernel.hpp"

namespace hidamatern {

struct FilterTerm {
  Complex weight;
  int power = 0;
  Complex rate;
};

struct CanonicalFilter {
  std::vector<FilterTerm> terms;

  Complex operator()(double u) const {
    Complex total{0.0, 0.0};
    for (const auto& t : terms) {
      if (u == 0.0) {
        if (t.power == 0) total += t.weight;
        continue;
      }
      // combined exponent keeps u^p e^{-mu u} finite for huge u
      total += t.weight * std::exp(static_cast<double>(t.power) * std::log(u) - t.rate * u);
    }
    return total;
  }
};

inline void validate(const CanonicalFilter& filter) {
  if (filter.terms.empty()) {
    throw std::invalid_argument("CanonicalFilter: no terms");
  }
  for (const auto& t : filter.terms) {
    if (!(t.rate.real() > 0.0)) {
      throw std::invalid_argument("CanonicalFilter: unstable term (Re(mu) <= 0)");
    }
    if (t.power < 0) {
      throw std::invalid_argument("CanonicalFilter: negative power");
    }
  }
}

struct QuadratureConfig {
  double tolerance = 1e-12;
  std::size_t max_refinements = 9;
};

/// Real part of int_tau^inf F(u) F*(u - tau) du by exp-sinh quadrature.
/// Throws std::runtime_error when the reported error estimate misses the
/// requested tolerance (typically a rate that is tiny relative to tau).
inline double covariance_from_filter(const CanonicalFilter& filter, double tau,
                                     const QuadratureConfig& cfg = {}) {
  validate(filter);
  detail::check_lag(tau);
  boost::math::quadrature::exp_sinh<double> integrator(cfg.max_refinements);
  // Shift to s = u - tau so the integral runs over [0, inf).
  auto integrand = [&](double s) {
    return (filter(s + tau) * std::conj(filter(s))).real();
  };
  double error = 0.0;
  double l1 = 0.0;
  const double value =
      integrator.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(),
                           cfg.tolerance, &error, &l1);
  if (!std::isfinite(value) || error > std::max(1e3 * cfg.tolerance, 1e-8) * std::max(l1, 1e-300)) {
    throw std::runtime_error("covariance_from_filter: quadrature did not converge");
  }
  return value;
}

/// Weight c making the single-term filter c u^p e^{-mu u} unit variance.
inline double unit_variance_weight(int power, Complex rate,
                                   const QuadratureConfig& cfg = {}) {
  CanonicalFilter f{{FilterTerm{{1.0, 0.0}, power, rate}}};
  return 1.0 / std::sqrt(covariance_from_filter(f, 0.0, cfg));
}

}  // namespace hidamatern

#endif  // HIDAMATERN_CANONICAL_FILTER_HPP
