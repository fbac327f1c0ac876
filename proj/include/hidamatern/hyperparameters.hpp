// Maximum-likelihood hyperparameter search over a fixed mixture template.

#ifndef HIDAMATERN_HYPERPARAMETERS_HPP
#define HIDAMATERN_HYPERPARAMETERS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "hidamatern/kalman.hpp"
#include "hidamatern/nelder_mead.hpp"

namespace hidamatern {

struct SearchConfig {
  int restarts = 4;           // random starts in addition to the template itself
  double start_spread = 1.0;  // std-dev of log-scale perturbations for random starts
  SimplexOptions simplex{.max_evaluations = 1500, .f_tolerance = 1e-10,
                         .x_tolerance = 1e-6, .initial_step = 0.3, .restarts = 1};
  std::uint64_t seed = 0;
};

struct HyperparameterFit {
  MixtureSpec mixture;
  double obs_noise = 0.0;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  double template_log_likelihood = -std::numeric_limits<double>::infinity();
  int failed_starts = 0;
};

namespace detail {

// Parameter vector: per component [log a, log c, (b if template b > 0)],
// followed by log noise.  Orders p and sigma2 stay fixed.
struct MixtureParameterisation {
  MixtureSpec base;

  Eigen::VectorXd pack(const MixtureSpec& mix, double noise) const {
    std::vector<double> v;
    for (const auto& c : mix.components) {
      v.push_back(std::log(c.spec.a));
      v.push_back(std::log(c.weight));
      if (c.spec.b > 0.0) v.push_back(c.spec.b);
    }
    v.push_back(std::log(noise));
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  std::pair<MixtureSpec, double> unpack(const Eigen::VectorXd& x) const {
    MixtureSpec mix = base;
    Eigen::Index i = 0;
    for (auto& c : mix.components) {
      c.spec.a = std::exp(x(i++));
      c.weight = std::exp(x(i++));
      if (c.spec.b > 0.0) c.spec.b = std::max(std::abs(x(i++)), 1e-12);
    }
    return {mix, std::exp(x(i))};
  }
};

inline double log_likelihood_or_nan(const MixtureSpec& mix, double noise, const Dataset& data) {
  try {
    return kalman_filter(StateSpaceModel::assemble(mix, noise), data).log_likelihood;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// Multi-start simplex search maximising the filter log-likelihood.  Start 0
/// is the template itself, so the result never scores below it.  Ties
/// between starts resolve to the lowest start index.
inline HyperparameterFit fit_hyperparameters(const MixtureSpec& tmpl, double obs_noise,
                                             const Dataset& data, const SearchConfig& cfg = {}) {
  validate(tmpl);
  for (const auto& c : tmpl.components) {
    if (!(c.weight > 0.0)) {
      throw std::invalid_argument("fit_hyperparameters: template weights must be > 0");
    }
  }
  if (!(obs_noise > 0.0)) throw std::invalid_argument("fit_hyperparameters: noise must be > 0");
  const detail::MixtureParameterisation param{tmpl};
  auto objective = [&](const Eigen::VectorXd& x) {
    const auto [mix, noise] = param.unpack(x);
    const double ll = detail::log_likelihood_or_nan(mix, noise, data);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  };

  HyperparameterFit out;
  out.template_log_likelihood = detail::log_likelihood_or_nan(tmpl, obs_noise, data);
  const Eigen::VectorXd x0 = param.pack(tmpl, obs_noise);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.start_spread);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x0;
  for (int s = 0; s <= cfg.restarts; ++s) {
    Eigen::VectorXd start = x0;
    if (s > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) start(i) += normal(rng);
    }
    const auto r = nelder_mead(objective, start, cfg.simplex);
    if (!std::isfinite(r.value)) {
      ++out.failed_starts;
      continue;
    }
    if (r.value < best) {
      best = r.value;
      best_x = r.x;
    }
  }
  if (!std::isfinite(best)) {
    throw std::runtime_error("fit_hyperparameters: no start produced a finite likelihood");
  }
  std::tie(out.mixture, out.obs_noise) = param.unpack(best_x);
  out.log_likelihood = -best;
  return out;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_HYPERPARAMETERS_HPP
