#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "hidamatern/exact_gp.hpp"
#include "hidamatern/hyperparameters.hpp"
#include "hidamatern/kalman.hpp"

using namespace hidamatern;

namespace {

constexpr double kPi = std::numbers::pi;

MixtureSpec single(double sigma2, double a, double b, int p) { return {{{1.0, {sigma2, a, b, p}}}}; }

struct Config {
  const char* name;
  MixtureSpec mix;
};

std::vector<Config> shipped_configs() {
  return {
      {"p0", single(1.0, 1.0, 0.0, 0)},
      {"p1", single(1.0, 1.0, 0.0, 1)},
      {"p2", single(1.0, 1.0, 0.0, 2)},
      {"p3", single(1.0, 1.0, 0.0, 3)},
      {"p1_b1", single(1.0, 1.0, 1.0, 1)},
      {"p1_b2pi", single(1.0, 1.0, 2.0 * kPi, 1)},
      {"p2_b1", single(1.0, 1.0, 1.0, 2)},
      {"p2_b2pi", single(1.0, 1.0, 2.0 * kPi, 2)},
      {"mixture", {{{0.7, {1.0, 0.5, 0.0, 1}}, {1.3, {1.0, 1.5, 2.0, 2}}}}},
  };
}

KernelFunction kernel_of(const MixtureSpec& mix) {
  return [mix](double t) { return mixture_eval(mix, t); };
}

Dataset random_dataset(std::size_t m, double span, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(0.0, span);
  std::normal_distribution<double> y(0.0, 1.0);
  std::vector<double> times(m), values(m);
  for (auto& x : times) x = t(rng);
  for (auto& x : values) x = y(rng);
  return make_dataset(times, values);
}

// Joseph-form update with a dense gain, written out independently.
GaussianState joseph(const GaussianState& s, double y, double noise, const Eigen::VectorXd& h) {
  const double S = h.dot(s.cov * h) + noise;
  const Eigen::VectorXd K = s.cov * h / S;
  const Eigen::MatrixXd I_KH = Eigen::MatrixXd::Identity(h.size(), h.size()) - K * h.transpose();
  return {s.mean + K * (y - h.dot(s.mean)), I_KH * s.cov * I_KH.transpose() + noise * K * K.transpose()};
}

GaussianState random_state(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd L(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) L(i, j) = z(rng);
  }
  Eigen::VectorXd m(n);
  for (int i = 0; i < n; ++i) m(i) = z(rng);
  return {m, L * L.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n)};
}

}  // namespace

// ------------------------------------------------------------ low-rank update

TEST(LowRankUpdate, ScalarReducesToTextbook) {
  const GaussianState s{Eigen::VectorXd::Constant(1, 0.3), Eigen::MatrixXd::Constant(1, 1, 2.0)};
  const auto u = low_rank_update(s, 1.0, 0.5, SparseRow{{0}, {1.0}});
  const double gain = 2.0 / 2.5;
  EXPECT_NEAR(u.mean(0), 0.3 + gain * 0.7, 1e-15);
  EXPECT_NEAR(u.cov(0, 0), (1.0 - gain) * 2.0, 1e-15);
}

TEST(LowRankUpdate, MatchesJosephForm) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 8;
    const auto s = random_state(n, rng);
    const int support = 1 + trial % 2;
    SparseRow h;
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < support; ++k) {
      h.index.push_back(idx[k]);
      h.weight.push_back(z(rng));
    }
    const double y = z(rng), noise = 0.1 + std::abs(z(rng));
    const auto a = low_rank_update(s, y, noise, h);
    const auto b = joseph(s, y, noise, h.dense(n));
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LowRankUpdate, UninformativeObservation) {
  std::mt19937_64 rng(12);
  const auto s = random_state(5, rng);
  const auto u = low_rank_update(s, 3.0, 1e14, SparseRow{{1, 3}, {1.0, 0.5}});
  EXPECT_LT((u.mean - s.mean).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((u.cov - s.cov).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LowRankUpdate, RejectsBadInput) {
  std::mt19937_64 rng(13);
  const auto s = random_state(3, rng);
  EXPECT_THROW(low_rank_update(s, 0.0, 0.1, SparseRow{}), std::invalid_argument);
  EXPECT_THROW(low_rank_update(s, 0.0, 0.1, SparseRow{{5}, {1.0}}), std::out_of_range);
  EXPECT_THROW(low_rank_update(s, 0.0, 0.0, SparseRow{{0}, {1.0}}), std::invalid_argument);
  const GaussianState broken{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, -1.0)};
  EXPECT_THROW(low_rank_update(broken, 0.0, 0.5, SparseRow{{0}, {1.0}}), std::runtime_error);
}

// ------------------------------------------------------------ filter

TEST(KalmanFilter, ExactnessAgainstDenseGp) {
  for (const auto& cfg : shipped_configs()) {
    const auto data = random_dataset(200, 20.0, 21);
    const double noise = 0.1;
    const auto model = StateSpaceModel::assemble(cfg.mix, noise);
    const auto filt = kalman_filter(model, data);
    const auto dense = exact_posterior(kernel_of(cfg.mix), data.times, data.values, noise, data.times);
    EXPECT_NEAR(filt.log_likelihood, dense.log_marginal_likelihood, 1e-6) << cfg.name;
    const auto post = posterior_at_data(model, data);
    const double prior = mixture_variance(cfg.mix);
    for (std::size_t i = 0; i < data.size(); ++i) {
      EXPECT_NEAR(post.mean[i], dense.mean[i], 1e-6 * std::sqrt(prior)) << cfg.name << " " << i;
      EXPECT_NEAR(post.variance[i], dense.variance[i], 1e-6 * prior) << cfg.name << " " << i;
      EXPECT_LE(post.variance[i], prior + 1e-10);
    }
  }
}

TEST(KalmanFilter, Matern52LogLikelihood) {
  const HidaMaternSpec s{1.0, std::sqrt(5.0), 0.0, 2};
  const auto data = random_dataset(200, 30.0, 22);
  const auto filt = kalman_filter(StateSpaceModel::assemble({{{1.0, s}}}, 0.3), data);
  const auto dense = exact_posterior([&](double t) { return eval_kernel(s, t); }, data.times, data.values,
                                     0.3, {});
  EXPECT_NEAR(filt.log_likelihood, dense.log_marginal_likelihood, 1e-6);
}

TEST(KalmanFilter, NoObservationsKeepsZeroMean) {
  Dataset data;
  data.times = {0.0, 0.5, 2.0};
  data.values = {0.0, 0.0, 0.0};
  data.observed = {false, false, false};
  const auto filt = kalman_filter(StateSpaceModel::assemble(single(1.0, 1.0, 0.0, 0), 0.1), data);
  for (const auto& s : filt.steps) EXPECT_EQ(s.updated.mean(0), 0.0);
  EXPECT_EQ(filt.log_likelihood, 0.0);
}

TEST(KalmanFilter, UniformGridComputesOneTransition) {
  std::vector<double> times, values;
  for (int i = 0; i < 300; ++i) {
    times.push_back(0.25 * i);
    values.push_back(std::sin(0.1 * i));
  }
  const auto filt = kalman_filter(StateSpaceModel::assemble(single(1.0, 1.0, 0.0, 2), 0.1),
                                  make_dataset(times, values));
  EXPECT_EQ(filt.transitions_computed, 1u);
  EXPECT_EQ(filt.transitions.size(), 1u);
}

TEST(KalmanFilter, InnovationVariancesPositive) {
  const auto data = random_dataset(100, 10.0, 23);
  const auto filt = kalman_filter(StateSpaceModel::assemble(shipped_configs()[8].mix, 0.1), data);
  for (const auto& s : filt.steps) EXPECT_GT(s.innovation_variance, 0.0);
  EXPECT_TRUE(std::isfinite(filt.log_likelihood));
}

TEST(KalmanFilter, DuplicateTimesAreSequentialUpdates) {
  const MixtureSpec mix = single(1.0, 1.0, 0.0, 1);
  const std::vector<double> times{0.0, 1.0, 1.0, 2.5}, values{0.2, -0.4, 0.1, 0.7};
  const auto data = make_dataset(times, values);
  const auto filt = kalman_filter(StateSpaceModel::assemble(mix, 0.2), data);
  const auto dense = exact_posterior(kernel_of(mix), times, values, 0.2, {});
  EXPECT_NEAR(filt.log_likelihood, dense.log_marginal_likelihood, 1e-10);
  EXPECT_EQ(filt.steps[2].delta, 0.0);
}

TEST(MakeDataset, SortsAndValidates) {
  const auto d = make_dataset({2.0, 0.5, 1.0}, {3.0, 1.0, 2.0});
  EXPECT_EQ(d.times, (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_EQ(d.values, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_THROW(make_dataset({0.0}, {}), std::invalid_argument);
  EXPECT_THROW(make_dataset({0.0}, {std::nan("")}), std::invalid_argument);
}

// ------------------------------------------------------------ smoother

TEST(RtsSmoother, SingleObservation) {
  const auto model = StateSpaceModel::assemble(single(1.0, 1.0, 0.0, 2), 0.1);
  const auto filt = kalman_filter(model, make_dataset({1.0}, {0.4}));
  const auto sm = rts_smooth(model, filt);
  ASSERT_EQ(sm.size(), 1u);
  EXPECT_EQ(sm[0].mean, filt.steps[0].updated.mean);
  EXPECT_EQ(sm[0].cov, filt.steps[0].updated.cov);
}

TEST(RtsSmoother, LastPointEqualsFiltered) {
  const auto model = StateSpaceModel::assemble(shipped_configs()[8].mix, 0.1);
  const auto filt = kalman_filter(model, random_dataset(50, 10.0, 24));
  const auto sm = rts_smooth(model, filt);
  EXPECT_EQ(sm.back().mean, filt.steps.back().updated.mean);
  EXPECT_EQ(sm.back().cov, filt.steps.back().updated.cov);
}

TEST(RtsSmoother, MixtureMatchesDense) {
  const MixtureSpec mix{{{1.0, {1.0, 0.8, 0.0, 2}}, {0.5, {1.0, 0.3, 3.0, 1}}}};
  const auto data = random_dataset(200, 25.0, 25);
  const auto post = posterior_at_data(StateSpaceModel::assemble(mix, 0.1), data);
  const auto dense = exact_posterior(kernel_of(mix), data.times, data.values, 0.1, data.times);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_NEAR(post.mean[i], dense.mean[i], 1e-6);
    EXPECT_NEAR(post.variance[i], dense.variance[i], 1e-6);
  }
}

TEST(RtsSmoother, SmoothCo2PriorStaysExact) {
  const MixtureSpec mix{{{0.05 * 0.05, {1.0, 1.0 / 25.0, 2.0 * kPi, 3}}, {2.3 * 2.3, {1.0, 0.01, 0.0, 3}}}};
  std::vector<double> times, values;
  for (int i = 0; i < 240; ++i) {
    times.push_back(i / 12.0);
    values.push_back(0.5 * std::sin(2.0 * kPi * i / 12.0) + 0.01 * i);
  }
  const auto data = make_dataset(times, values);
  const auto model = StateSpaceModel::assemble(mix, 0.01);
  const auto post = posterior_at_data(model, data);
  const auto dense = exact_posterior(kernel_of(mix), times, values, 0.01, times);
  EXPECT_NEAR(kalman_filter(model, data).log_likelihood, dense.log_marginal_likelihood, 1e-6);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(post.mean[i], dense.mean[i], 1e-6);
}

// ------------------------------------------------------------ predict

TEST(Predict, QueryAtObservedTime) {
  const auto model = StateSpaceModel::assemble(single(1.0, 1.0, 0.0, 1), 0.1);
  const auto data = random_dataset(40, 10.0, 26);
  const auto at_data = posterior_at_data(model, data);
  const auto pred = predict(model, data, {data.times[7]});
  EXPECT_NEAR(pred.mean[0], at_data.mean[7], 1e-12);
  EXPECT_NEAR(pred.variance[0], at_data.variance[7], 1e-12);
}

TEST(Predict, FarQueryRevertsToPrior) {
  const auto mix = shipped_configs()[8].mix;
  const auto model = StateSpaceModel::assemble(mix, 0.1);
  const auto pred = predict(model, random_dataset(60, 10.0, 27), {-500.0, 510.0});
  for (double v : pred.variance) EXPECT_NEAR(v, mixture_variance(mix), 0.01 * mixture_variance(mix));
  for (double m : pred.mean) EXPECT_NEAR(m, 0.0, 1e-6);
}

TEST(Predict, RandomQueriesMatchDense) {
  for (const auto& cfg : shipped_configs()) {
    const auto data = random_dataset(200, 20.0, 28);
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> q(-2.0, 22.0);
    std::vector<double> queries(100);
    for (auto& x : queries) x = q(rng);
    const auto pred = predict(StateSpaceModel::assemble(cfg.mix, 0.1), data, queries);
    const auto dense = exact_posterior(kernel_of(cfg.mix), data.times, data.values, 0.1, queries);
    const double sd = std::sqrt(mixture_variance(cfg.mix));
    for (std::size_t i = 0; i < queries.size(); ++i) {
      EXPECT_NEAR(pred.mean[i], dense.mean[i], 1e-6 * sd) << cfg.name;
      EXPECT_NEAR(pred.variance[i], dense.variance[i], 1e-6 * sd * sd) << cfg.name;
    }
    EXPECT_EQ(pred.times, queries);
  }
}

TEST(Predict, ComponentRowsSumToTotal) {
  const auto mix = shipped_configs()[8].mix;
  const auto model = StateSpaceModel::assemble(mix, 0.1);
  const auto data = random_dataset(80, 10.0, 30);
  const std::vector<double> q{0.5, 3.3, 12.0};
  const auto total = predict(model, data, q);
  const auto r0 = model.component_observation(0), r1 = model.component_observation(1);
  const auto c0 = predict(model, data, q, &r0), c1 = predict(model, data, q, &r1);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(c0.mean[i] + c1.mean[i], total.mean[i], 1e-12);
}

// ------------------------------------------------------------ sampling

TEST(SamplePrior, MonteCarloMoments) {
  const MixtureSpec mix = shipped_configs()[6].mix;
  const auto model = StateSpaceModel::assemble(mix, 0.1);
  const std::vector<double> times{0.0, 0.4, 1.3};
  const std::size_t n = 10000;
  const auto draws = sample_prior(model, times, 31, n);
  const double k0 = mixture_eval(mix, 0.0);
  for (std::size_t j = 0; j < times.size(); ++j) {
    double s2 = 0.0;
    for (const auto& d : draws) s2 += d[j] * d[j];
    const double se = std::sqrt(2.0) * k0 / std::sqrt(static_cast<double>(n));
    EXPECT_NEAR(s2 / n, k0, 3.0 * se) << j;
  }
  for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 2}, std::pair{0, 2}}) {
    const double lag = times[j] - times[i];
    const double kl = mixture_eval(mix, lag);
    double c = 0.0;
    for (const auto& d : draws) c += d[i] * d[j];
    const double se = std::sqrt((k0 * k0 + kl * kl) / static_cast<double>(n));
    EXPECT_NEAR(c / n, kl, 3.0 * se) << lag;
  }
}

TEST(SamplePrior, DeterministicAndValidated) {
  const auto model = StateSpaceModel::assemble(single(1.0, 1.0, 0.0, 2), 0.1);
  const std::vector<double> times{0.0, 0.1, 0.7, 3.0};
  EXPECT_EQ(sample_prior(model, times, 5, 3), sample_prior(model, times, 5, 3));
  EXPECT_NE(sample_prior(model, times, 5, 1), sample_prior(model, times, 6, 1));
  EXPECT_THROW(sample_prior(model, {1.0, 0.0}, 5), std::invalid_argument);
}

// ------------------------------------------------------------ hyperparameters

namespace {

Dataset ou_data(std::size_t m, std::uint64_t seed) {
  const auto truth = StateSpaceModel::assemble(single(1.0, 2.0, 0.0, 0), 0.1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(0.0, 400.0);
  std::vector<double> times(m);
  for (auto& x : times) x = t(rng);
  std::sort(times.begin(), times.end());
  auto f = sample_prior(truth, times, seed + 1)[0];
  std::normal_distribution<double> eps(0.0, std::sqrt(0.1));
  for (auto& v : f) v += eps(rng);
  return make_dataset(times, f);
}

}  // namespace

TEST(FitHyperparameters, RecoversOrnsteinUhlenbeckRate) {
  const auto data = ou_data(2000, 41);
  SearchConfig cfg;
  cfg.restarts = 2;
  cfg.seed = 7;
  const auto fit = fit_hyperparameters(single(1.0, 0.5, 0.0, 0), 0.5, data, cfg);
  EXPECT_NEAR(fit.mixture.components[0].spec.a, 2.0, 0.5);
  EXPECT_GE(fit.log_likelihood, fit.template_log_likelihood);
}

TEST(FitHyperparameters, DeterministicUnderSeed) {
  const auto data = ou_data(300, 42);
  SearchConfig cfg;
  cfg.restarts = 2;
  cfg.seed = 3;
  const auto a = fit_hyperparameters(single(1.0, 1.0, 0.0, 1), 0.2, data, cfg);
  const auto b = fit_hyperparameters(single(1.0, 1.0, 0.0, 1), 0.2, data, cfg);
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
  EXPECT_EQ(a.mixture.components[0].spec.a, b.mixture.components[0].spec.a);
  EXPECT_EQ(a.obs_noise, b.obs_noise);
}

TEST(FitHyperparameters, RejectsBadTemplate) {
  const auto data = ou_data(50, 43);
  EXPECT_THROW(fit_hyperparameters(single(1.0, 1.0, 0.0, 0), 0.0, data), std::invalid_argument);
  EXPECT_THROW(fit_hyperparameters({{{0.0, {1.0, 1.0, 0.0, 0}}}}, 0.1, data), std::invalid_argument);
}
