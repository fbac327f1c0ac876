// Kalman filtering with sparse low-rank updates, RTS smoothing, prediction
// at arbitrary times and prior sampling for state-space GP models.
//
// Any model type exposing
//
//   int state_dim() const;
//   double obs_noise() const;
//   TransitionPair transition(double delta) const;
//   Eigen::MatrixXd stationary_covariance() const;
//   SparseRow observation() const;
//
// can be filtered (StateSpaceModel and LinearTransformedModel both do).

#ifndef HIDAMATERN_KALMAN_HPP
#define HIDAMATERN_KALMAN_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hidamatern/state_space.hpp"

namespace hidamatern {

template <class M>
concept GaussMarkovModel = requires(const M& m, double d) {
  { m.state_dim() } -> std::convertible_to<int>;
  { m.obs_noise() } -> std::convertible_to<double>;
  { m.transition(d) } -> std::convertible_to<TransitionPair>;
  { m.stationary_covariance() } -> std::convertible_to<Eigen::MatrixXd>;
  { m.observation() } -> std::convertible_to<SparseRow>;
};

/// Time-sorted observations.  Entries with observed[i] == false are
/// prediction-only pseudo-points: the filter steps through them without an
/// update.
struct Dataset {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<bool> observed;

  std::size_t size() const { return times.size(); }
};

/// Sorts (times, values) by time (stable, so duplicates keep their order).
inline Dataset make_dataset(const std::vector<double>& times,
                            const std::vector<double>& values) {
  if (times.size() != values.size()) {
    throw std::invalid_argument("make_dataset: times and values differ in length");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(values[i])) {
      throw std::invalid_argument("make_dataset: non-finite time or value");
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return times[l] < times[r]; });
  Dataset d;
  d.times.reserve(times.size());
  d.values.reserve(times.size());
  for (auto i : order) {
    d.times.push_back(times[i]);
    d.values.push_back(values[i]);
  }
  d.observed.assign(times.size(), true);
  return d;
}

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct FilterStep {
  double time = 0.0;
  double delta = 0.0;              // gap from the previous step (0 for the first)
  std::size_t transition = 0;      // index into FilterResult::transitions
  bool observed = false;
  GaussianState predicted;
  GaussianState updated;
  double innovation = 0.0;
  double innovation_variance = 0.0;
};

struct FilterResult {
  std::vector<FilterStep> steps;
  std::vector<TransitionPair> transitions;  // unique gaps, memoised
  double log_likelihood = 0.0;
  std::size_t transitions_computed = 0;     // general-formula evaluations
};

namespace detail {

struct UpdateTerms {
  double innovation;
  double variance;
};

// alpha = 1 / (sum_{i,j in Z} w_i w_j P[i,j] + R), beta = y - sum_i w_i m[i]
// m += alpha beta u, P -= alpha u u^T with u = sum_i w_i P[:, i].
inline UpdateTerms low_rank_update_in_place(GaussianState& s, double y, double noise,
                                            const SparseRow& h) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(s.mean.size());
  for (std::size_t k = 0; k < h.index.size(); ++k) u += h.weight[k] * s.cov.col(h.index[k]);
  const double hPh = h.dot(u);
  const double S = hPh + noise;
  if (!(S > 0.0) || !std::isfinite(S)) {
    throw std::runtime_error("Kalman update: innovation variance is not positive");
  }
  const double alpha = 1.0 / S;
  const double beta = y - h.dot(s.mean);
  if (!std::isfinite(beta)) {
    throw std::runtime_error("Kalman update: non-finite innovation");
  }
  s.mean.noalias() += (alpha * beta) * u;
  s.cov.noalias() -= alpha * u * u.transpose();
  s.cov = hermitian_part(s.cov);
  return {beta, S};
}

inline void check_sparse_row(const SparseRow& h, int dim) {
  if (h.index.empty() || h.index.size() != h.weight.size()) {
    throw std::invalid_argument("observation support must be non-empty");
  }
  for (int i : h.index) {
    if (i < 0 || i >= dim) throw std::out_of_range("observation support index");
  }
}

}  // namespace detail

/// Kalman update exploiting the sparse observation row; never forms a gain
/// matrix.  Equivalent to the Joseph-form update.
inline GaussianState low_rank_update(const GaussianState& pred, double y, double noise,
                                     const SparseRow& h) {
  if (!(noise > 0.0)) throw std::invalid_argument("low_rank_update: noise must be > 0");
  detail::check_sparse_row(h, static_cast<int>(pred.mean.size()));
  GaussianState s = pred;
  detail::low_rank_update_in_place(s, y, noise, h);
  return s;
}

template <GaussMarkovModel Model>
FilterResult kalman_filter(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("kalman_filter: empty dataset");
  if (data.values.size() != data.size() || data.observed.size() != data.size()) {
    throw std::invalid_argument("kalman_filter: malformed dataset");
  }
  const int n = model.state_dim();
  const SparseRow h = model.observation();
  detail::check_sparse_row(h, n);
  const double noise = model.obs_noise();
  constexpr double kLog2Pi = 1.8378770664093454836;

  FilterResult res;
  res.steps.reserve(data.size());
  // Gaps that differ only by the rounding of their timestamps (t = i * 0.05
  // on a long grid) share one transition pair.
  std::map<double, std::size_t> memo;
  auto transition_for = [&](double delta, double t_abs) {
    const double tol = 8.0 * std::numeric_limits<double>::epsilon() * t_abs;
    auto it = memo.lower_bound(delta - tol);
    if (it != memo.end() && it->first <= delta + tol) return it->second;
    if (delta != 0.0) ++res.transitions_computed;
    res.transitions.push_back(model.transition(delta));
    memo.emplace(delta, res.transitions.size() - 1);
    return res.transitions.size() - 1;
  };

  GaussianState state{Eigen::VectorXd::Zero(n), model.stationary_covariance()};
  for (std::size_t k = 0; k < data.size(); ++k) {
    FilterStep step;
    step.time = data.times[k];
    step.observed = data.observed[k];
    if (k == 0) {
      step.predicted = state;
    } else {
      step.delta = data.times[k] - data.times[k - 1];
      if (!(step.delta >= 0.0)) {
        throw std::invalid_argument("kalman_filter: times must be sorted");
      }
      step.transition = transition_for(
          step.delta, std::max(std::abs(data.times[k]), std::abs(data.times[k - 1])));
      const auto& tp = res.transitions[step.transition];
      step.predicted.mean.noalias() = tp.A * state.mean;
      step.predicted.cov = hermitian_part(tp.A * state.cov * tp.A.transpose() + tp.Q);
    }
    step.updated = step.predicted;
    if (step.observed) {
      const auto terms =
          detail::low_rank_update_in_place(step.updated, data.values[k], noise, h);
      step.innovation = terms.innovation;
      step.innovation_variance = terms.variance;
      res.log_likelihood -= 0.5 * (kLog2Pi + std::log(terms.variance) +
                                   terms.innovation * terms.innovation / terms.variance);
    }
    state = step.updated;
    res.steps.push_back(std::move(step));
  }
  if (!std::isfinite(res.log_likelihood)) {
    throw std::runtime_error("kalman_filter: non-finite log-likelihood");
  }
  return res;
}

namespace detail {

// Pseudo-inverse of a symmetric matrix that is PSD up to round-off; used when
// a very smooth process makes the predicted covariance numerically singular.
inline Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cut = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-13 * static_cast<double>(S.rows());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cut) inv(i) = 1.0 / ev(i);
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// Rauch-Tung-Striebel backward pass; returns smoothed states per step.
/// The gain G = P_k A^T (P_{k+1}^-)^-1 is obtained by a symmetric solve
/// (pseudo-inverse if the predicted covariance is numerically singular).
template <GaussMarkovModel Model>
std::vector<GaussianState> rts_smooth(const Model& model, const FilterResult& filt) {
  (void)model;
  const std::size_t m = filt.steps.size();
  std::vector<GaussianState> smoothed(m);
  if (m == 0) return smoothed;
  smoothed[m - 1] = filt.steps[m - 1].updated;
  for (std::size_t k = m - 1; k-- > 0;) {
    const auto& cur = filt.steps[k];
    const auto& next = filt.steps[k + 1];
    const auto& A = filt.transitions[next.transition].A;
    const Eigen::MatrixXd cross = A * cur.updated.cov;  // (P_k A^T)^T
    Eigen::LDLT<Eigen::MatrixXd> ldlt(next.predicted.cov);
    const bool definite = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
    const Eigen::MatrixXd G = definite ? Eigen::MatrixXd(ldlt.solve(cross).transpose())
                                       : Eigen::MatrixXd(detail::psd_pinv(next.predicted.cov) * cross)
                                             .transpose();
    auto& out = smoothed[k];
    out.mean = cur.updated.mean + G * (smoothed[k + 1].mean - next.predicted.mean);
    out.cov = hermitian_part(cur.updated.cov +
                             G * (smoothed[k + 1].cov - next.predicted.cov) * G.transpose());
    if (!out.mean.allFinite()) {
      throw std::runtime_error("rts_smooth: singular predicted covariance");
    }
  }
  return smoothed;
}

struct Prediction {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;
};

namespace detail {

struct MergedTimeline {
  Dataset data;
  std::vector<std::size_t> query_slot;  // position of each query in `data`
};

inline MergedTimeline merge_queries(const Dataset& data, const std::vector<double>& queries) {
  for (double q : queries) {
    if (!std::isfinite(q)) throw std::invalid_argument("predict: non-finite query time");
  }
  MergedTimeline out;
  const std::size_t total = data.size() + queries.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  auto time_of = [&](std::size_t i) {
    return i < data.size() ? data.times[i] : queries[i - data.size()];
  };
  // observed points first among ties so a query sees their update
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return time_of(l) < time_of(r); });
  out.query_slot.resize(queries.size());
  for (std::size_t pos = 0; pos < total; ++pos) {
    const std::size_t i = order[pos];
    out.data.times.push_back(time_of(i));
    if (i < data.size()) {
      out.data.values.push_back(data.values[i]);
      out.data.observed.push_back(data.observed[i]);
    } else {
      out.data.values.push_back(0.0);
      out.data.observed.push_back(false);
      out.query_slot[i - data.size()] = pos;
    }
  }
  return out;
}

}  // namespace detail

/// Posterior of the observed process (h-projection, data units) at
/// `query_times`, using `row` in place of the model's observation row when
/// given (e.g. a single mixture component).
template <GaussMarkovModel Model>
Prediction predict(const Model& model, const Dataset& data,
                   const std::vector<double>& query_times,
                   const SparseRow* row = nullptr) {
  const auto merged = detail::merge_queries(data, query_times);
  Prediction out;
  if (merged.data.size() == 0) return out;
  const auto filt = kalman_filter(model, merged.data);
  const auto smoothed = rts_smooth(model, filt);
  const SparseRow h = row ? *row : model.observation();
  out.times = query_times;
  out.mean.reserve(query_times.size());
  out.variance.reserve(query_times.size());
  for (std::size_t q = 0; q < query_times.size(); ++q) {
    const auto& s = smoothed[merged.query_slot[q]];
    Eigen::VectorXd u = Eigen::VectorXd::Zero(s.mean.size());
    for (std::size_t k = 0; k < h.index.size(); ++k) u += h.weight[k] * s.cov.col(h.index[k]);
    out.mean.push_back(h.dot(s.mean));
    out.variance.push_back(std::max(0.0, h.dot(u)));
  }
  return out;
}

/// Smoothed posterior marginals at the data times themselves.
template <GaussMarkovModel Model>
Prediction posterior_at_data(const Model& model, const Dataset& data) {
  const auto filt = kalman_filter(model, data);
  const auto smoothed = rts_smooth(model, filt);
  const SparseRow h = model.observation();
  Prediction out;
  out.times = data.times;
  for (const auto& s : smoothed) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(s.mean.size());
    for (std::size_t k = 0; k < h.index.size(); ++k) u += h.weight[k] * s.cov.col(h.index[k]);
    out.mean.push_back(h.dot(s.mean));
    out.variance.push_back(std::max(0.0, h.dot(u)));
  }
  return out;
}

namespace detail {

// Square root L with L L^T = S for a PSD (possibly singular) matrix.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hermitian_part(S));
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace detail

/// Draws from the prior at sorted `times` by iterating the difference
/// recursion x_{k+1} = A x_k + eps, eps ~ N(0, Q), from x_0 ~ N(0, P_inf).
/// Returns draws[d][k] = f(times[k]) of draw d.
template <GaussMarkovModel Model>
std::vector<std::vector<double>> sample_prior(const Model& model,
                                              const std::vector<double>& times,
                                              std::uint64_t seed, std::size_t draws = 1) {
  if (!std::is_sorted(times.begin(), times.end())) {
    throw std::invalid_argument("sample_prior: times must be sorted");
  }
  const int n = model.state_dim();
  const SparseRow h = model.observation();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise_vec = [&]() {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
  };
  // transitions per distinct gap, computed lazily
  std::unordered_map<double, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> cache;
  const Eigen::MatrixXd p0_root = detail::psd_sqrt(model.stationary_covariance());
  std::vector<std::vector<double>> out(draws, std::vector<double>(times.size()));
  for (std::size_t d = 0; d < draws; ++d) {
    Eigen::VectorXd x;
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (k == 0) {
        x = p0_root * noise_vec();
      } else {
        const double delta = times[k] - times[k - 1];
        if (delta > 0.0) {
          auto it = cache.find(delta);
          if (it == cache.end()) {
            auto tp = model.transition(delta);
            it = cache.emplace(delta, std::make_pair(tp.A, detail::psd_sqrt(tp.Q))).first;
          }
          x = it->second.first * x + it->second.second * noise_vec();
        }
      }
      out[d][k] = h.dot(x);
    }
  }
  return out;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_KALMAN_HPP
