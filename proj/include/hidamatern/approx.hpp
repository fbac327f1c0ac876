// Least-squares fits of Hida-Matern mixtures to arbitrary stationary kernels.

#ifndef HIDAMATERN_APPROX_HPP
#define HIDAMATERN_APPROX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "hidamatern/exact_gp.hpp"
#include "hidamatern/kernel.hpp"
#include "hidamatern/nelder_mead.hpp"

namespace hidamatern {

/// Uniform trapezoid rule on [0, T].
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;

  static QuadratureGrid uniform(double T, std::size_t n) {
    if (!(T > 0.0) || n < 2) throw std::invalid_argument("QuadratureGrid: need T > 0, n >= 2");
    QuadratureGrid g;
    const double h = T / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      g.nodes.push_back(h * static_cast<double>(i));
      g.weights.push_back((i == 0 || i + 1 == n) ? 0.5 * h : h);
    }
    return g;
  }
};

struct FitBounds {
  double log_a_min = std::log(1e-6);
  double log_a_max = std::log(1e6);
  double log_c_min = std::log(1e-12);
  double log_c_max = std::log(1e12);
};

struct FitProblem {
  KernelFunction reference;
  int mixands = 4;
  int order = 2;
  QuadratureGrid grid;
  FitBounds bounds;
};

/// Finds the point after which |k_ref| stays below 1e-6 k_ref(0) and sets T to
/// three times that (capped at `t_cap`), so the fitted mixture's tail is also
/// penalised.  Lays `nodes` points on [0, T].
inline FitProblem make_fit_problem(KernelFunction reference, int mixands, int order,
                                   std::size_t nodes = 2048, double t_cap = 1000.0) {
  if (mixands < 1) throw std::invalid_argument("make_fit_problem: need at least one mixand");
  if (order < 0 || order > kMaxOrder) throw std::invalid_argument("make_fit_problem: bad order");
  const double k0 = std::abs(reference(0.0));
  if (!(k0 > 0.0)) throw std::invalid_argument("make_fit_problem: reference k(0) must be nonzero");
  // scan a fine log-spaced probe for the last crossing above threshold
  double T = t_cap;
  double last_above = 0.0;
  for (double t = 1e-3; t <= t_cap; t *= 1.01) {
    if (std::abs(reference(t)) >= 1e-6 * k0) last_above = t;
  }
  if (last_above < t_cap) T = std::min(t_cap, 3.0 * std::max(last_above * 1.01, 1e-3));
  FitProblem prob{std::move(reference), mixands, order, QuadratureGrid::uniform(T, nodes), {}};
  return prob;
}

/// Trapezoid approximation of int (k_ref - k_mix)^2 dtau over the grid.
inline double l2_distance(const KernelFunction& reference, const MixtureSpec& mix,
                          const QuadratureGrid& grid) {
  double total = 0.0;
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const double d = reference(grid.nodes[i]) - mixture_eval(mix, grid.nodes[i]);
    total += grid.weights[i] * d * d;
  }
  return total;
}

inline double l2_norm_squared(const KernelFunction& reference, const QuadratureGrid& grid) {
  double total = 0.0;
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    const double v = reference(grid.nodes[i]);
    total += grid.weights[i] * v * v;
  }
  return total;
}

/// (1/2pi) int (S_ref - S_mix)^2 dw over a symmetric uniform grid [-W, W].
/// By Parseval this matches 2 * l2_distance for kernels decayed within the grid.
inline double psd_l2_distance(const std::function<double(double)>& reference_psd,
                              const MixtureSpec& mix, double omega_max, std::size_t nodes) {
  const double h = 2.0 * omega_max / static_cast<double>(nodes - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double w = -omega_max + h * static_cast<double>(i);
    const double d = reference_psd(w) - mixture_psd(mix, w);
    total += ((i == 0 || i + 1 == nodes) ? 0.5 : 1.0) * h * d * d;
  }
  return total / (2.0 * std::numbers::pi);
}

struct MixtureFit {
  MixtureSpec mixture;
  double distance = std::numeric_limits<double>::infinity();
  double relative_error = std::numeric_limits<double>::infinity();  // distance / ||k_ref||^2
  int failed_starts = 0;
};

namespace detail {

// x = [log a_i, b_i, log c_i] per mixand; unit sigma2, weights carry scale.
inline MixtureSpec decode_mixture(const Eigen::VectorXd& x, int order) {
  MixtureSpec mix;
  for (Eigen::Index i = 0; i + 2 < x.size(); i += 3) {
    mix.components.push_back(
        {std::exp(x(i + 2)), HidaMaternSpec{1.0, std::exp(x(i)), std::abs(x(i + 1)), order}});
  }
  return mix;
}

inline void sort_components(MixtureSpec& mix) {
  std::stable_sort(mix.components.begin(), mix.components.end(),
                   [](const MixtureComponent& l, const MixtureComponent& r) {
                     if (l.spec.b != r.spec.b) return l.spec.b < r.spec.b;
                     return l.spec.a < r.spec.a;
                   });
}

}  // namespace detail

/// Multi-start simplex minimisation of the L2 distance.  Deterministic for a
/// given seed; ties between starts resolve to the lowest start index.
inline MixtureFit fit_mixture(const FitProblem& problem, int restarts, std::uint64_t seed,
                              SimplexOptions simplex = {.max_evaluations = 20000,
                                                        .f_tolerance = 1e-16,
                                                        .x_tolerance = 1e-10,
                                                        .initial_step = 0.5,
                                                        .restarts = 6}) {
  if (restarts < 1) throw std::invalid_argument("fit_mixture: restarts must be >= 1");
  if (problem.mixands < 1) throw std::invalid_argument("fit_mixture: need at least one mixand");
  const auto& grid = problem.grid;
  const double T = grid.nodes.back();
  // reference values are fixed: tabulate once
  std::vector<double> ref(grid.nodes.size());
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = problem.reference(grid.nodes[i]);
  const double ref_norm = l2_norm_squared(problem.reference, grid);
  const double k0 = ref.front();
  const auto poly = detail::matern_polynomial(problem.order);

  const auto& bnd = problem.bounds;
  auto objective = [&](const Eigen::VectorXd& x) {
    for (Eigen::Index i = 0; i < x.size(); i += 3) {
      if (x(i) < bnd.log_a_min || x(i) > bnd.log_a_max || x(i + 2) < bnd.log_c_min ||
          x(i + 2) > bnd.log_c_max) {
        return std::numeric_limits<double>::infinity();
      }
    }
    const MixtureSpec mix = detail::decode_mixture(x, problem.order);
    double total = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      double v = 0.0;
      for (const auto& c : mix.components) {
        const double u = c.spec.a * grid.nodes[i];
        double acc = 0.0;
        for (auto w = poly.rbegin(); w != poly.rend(); ++w) acc = acc * u + *w;
        v += c.weight * std::cos(c.spec.b * grid.nodes[i]) * acc * std::exp(-u);
      }
      const double d = ref[i] - v;
      total += grid.weights[i] * d * d;
    }
    return total / ref_norm;
  };

  // frequency scale from sign changes of the reference on the grid
  int sign_changes = 0;
  for (std::size_t i = 1; i < ref.size(); ++i) {
    if ((ref[i] > 0.0) != (ref[i - 1] > 0.0)) ++sign_changes;
  }
  const double b_max = std::numbers::pi * (sign_changes + 2) / T;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  MixtureFit best;
  Eigen::VectorXd best_x;
  for (int s = 0; s < restarts; ++s) {
    Eigen::VectorXd x(3 * problem.mixands);
    for (int m = 0; m < problem.mixands; ++m) {
      x(3 * m) = std::log(std::exp(std::log(0.5) + unit(rng) * std::log(200.0)) / T);
      x(3 * m + 1) = (m == 0 && s % 2 == 0) ? 0.0 : b_max * unit(rng);
      x(3 * m + 2) = std::log(std::abs(k0) / problem.mixands) + (unit(rng) - 0.5);
    }
    const auto r = nelder_mead(objective, x, simplex);
    if (!std::isfinite(r.value)) {
      ++best.failed_starts;
      continue;
    }
    if (r.value < best.relative_error) {
      best.relative_error = r.value;
      best_x = r.x;
    }
  }
  if (best_x.size() == 0) throw std::runtime_error("fit_mixture: all starts diverged");
  best.mixture = detail::decode_mixture(best_x, problem.order);
  detail::sort_components(best.mixture);
  best.distance = best.relative_error * ref_norm;
  return best;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_APPROX_HPP
