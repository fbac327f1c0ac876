// Command implementations behind the hidamatern CLI.  Each command reads an
// ExperimentConfig, writes its outputs under an output directory and reports
// diagnostics on a log stream.  Argument parsing lives in tools/.

#ifndef HIDAMATERN_COMMANDS_HPP
#define HIDAMATERN_COMMANDS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hidamatern/approx.hpp"
#include "hidamatern/exact_gp.hpp"
#include "hidamatern/hyperparameters.hpp"
#include "hidamatern/io.hpp"
#include "hidamatern/kalman.hpp"
#include "hidamatern/synthetic.hpp"

namespace hidamatern {

/// Bad invocation (unknown names, missing inputs); maps to exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  std::string out_dir = ".";
  bool no_opt = false;
};

namespace detail {

inline std::filesystem::path out_path(const RunOptions& run, const std::string& name) {
  std::filesystem::create_directories(run.out_dir);
  return std::filesystem::path(run.out_dir) / name;
}

inline std::ofstream open_out(const RunOptions& run, const std::string& name) {
  const auto p = out_path(run, name);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline Dataset load_data(const ExperimentConfig& cfg) {
  if (cfg.data.empty()) throw UsageError("no data file given (--data or config \"data\")");
  if (!std::filesystem::exists(cfg.data)) throw UsageError("data file not found: " + cfg.data);
  return read_series_file(cfg.data);
}

inline void require_kernel(const ExperimentConfig& cfg) {
  if (cfg.kernel.components.empty()) throw UsageError("config has no kernel");
}

// Affine map between data units and the units the model is fitted in.
struct Standardisation {
  double shift = 0.0;
  double scale = 1.0;
};

inline Standardisation standardisation(const Dataset& d, const Json& opts) {
  Standardisation s;
  const auto n = static_cast<double>(d.size());
  if (opts.value("center", true)) {
    for (double v : d.values) s.shift += v / n;
  }
  if (opts.value("scale", true) && d.size() > 1) {
    double ss = 0.0;
    for (double v : d.values) ss += (v - s.shift) * (v - s.shift);
    const double sd = std::sqrt(ss / n);
    if (sd > 0.0) s.scale = sd;
  }
  return s;
}

inline Dataset apply(const Standardisation& s, Dataset d) {
  for (auto& v : d.values) v = (v - s.shift) / s.scale;
  return d;
}

}  // namespace detail

/// Fits hyperparameters (unless no_opt) and writes fitted.json + report.txt.
/// Noise in the config is in data units.
inline int cmd_fit(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  detail::require_kernel(cfg);
  const Dataset raw = detail::load_data(cfg);
  const auto st = detail::standardisation(raw, cfg.options);
  const Dataset data = detail::apply(st, raw);
  const double noise = cfg.obs_noise / (st.scale * st.scale);

  HyperparameterFit fit;
  if (run.no_opt) {
    fit.mixture = cfg.kernel;
    fit.obs_noise = noise;
    fit.log_likelihood = kalman_filter(StateSpaceModel::assemble(cfg.kernel, noise), data).log_likelihood;
    fit.template_log_likelihood = fit.log_likelihood;
  } else {
    SearchConfig sc;
    sc.seed = cfg.seed;
    sc.restarts = cfg.options.value("restarts", sc.restarts);
    sc.simplex.max_evaluations = cfg.options.value("max_evaluations", sc.simplex.max_evaluations);
    fit = fit_hyperparameters(cfg.kernel, noise, data, sc);
  }
  if (!std::isfinite(fit.log_likelihood)) throw std::runtime_error("fit: non-finite log-likelihood");
  // log-likelihood in data units: Jacobian of the affine standardisation
  const double ll_data = fit.log_likelihood - static_cast<double>(data.size()) * std::log(st.scale);

  ExperimentConfig out = cfg;
  out.kernel = fit.mixture;
  out.obs_noise = fit.obs_noise * st.scale * st.scale;
  {
    auto f = detail::open_out(run, "fitted.json");
    f << dump_json(to_json(out));
  }
  auto r = detail::open_out(run, "report.txt");
  r << "points " << data.size() << '\n'
    << "optimised " << (run.no_opt ? "no" : "yes") << '\n'
    << "log_likelihood " << format_double(ll_data) << '\n'
    << "template_log_likelihood "
    << format_double(fit.template_log_likelihood - static_cast<double>(data.size()) * std::log(st.scale))
    << '\n'
    << "failed_starts " << fit.failed_starts << '\n'
    << "obs_noise " << format_double(out.obs_noise) << '\n';
  log << "fit: log-likelihood " << format_double(ll_data) << '\n';
  return 0;
}

/// Writes predictions.csv (t,mean,variance) over the query grid, plus
/// component_<i>.csv per mixture component when there is more than one.
inline int cmd_predict(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  detail::require_kernel(cfg);
  const Dataset raw = detail::load_data(cfg);
  const auto queries = cfg.query.resolve();
  if (queries.empty()) throw UsageError("query grid is empty");
  const auto st = detail::standardisation(raw, cfg.options);
  const Dataset data = detail::apply(st, raw);
  const auto model = StateSpaceModel::assemble(cfg.kernel, cfg.obs_noise / (st.scale * st.scale));

  auto to_data_units = [&](Prediction p, bool shift) {
    for (auto& m : p.mean) m = m * st.scale + (shift ? st.shift : 0.0);
    for (auto& v : p.variance) v *= st.scale * st.scale;
    return p;
  };
  {
    auto f = detail::open_out(run, "predictions.csv");
    write_prediction(f, to_data_units(predict(model, data, queries), true));
  }
  if (model.blocks().size() > 1) {
    for (std::size_t i = 0; i < model.blocks().size(); ++i) {
      const SparseRow row = model.component_observation(i);
      auto f = detail::open_out(run, "component_" + std::to_string(i) + ".csv");
      write_prediction(f, to_data_units(predict(model, data, queries, &row), false));
    }
  }
  log << "predict: " << queries.size() << " query times\n";
  return 0;
}

/// Writes samples.csv (t,draw_0,...) from the prior over the query grid.
inline int cmd_sample(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  detail::require_kernel(cfg);
  auto times = cfg.query.resolve();
  if (times.empty()) throw UsageError("query grid is empty");
  std::sort(times.begin(), times.end());
  const auto draws = cfg.options.value("draws", std::size_t{1});
  const auto model = StateSpaceModel::assemble(cfg.kernel, cfg.obs_noise);
  auto f = detail::open_out(run, "samples.csv");
  write_samples(f, times, sample_prior(model, times, cfg.seed, draws));
  log << "sample: " << draws << " draws at " << times.size() << " times\n";
  return 0;
}

/// Fits a mixture to options.reference; writes mixture.json, kernel_fit.csv
/// (tau,k_ref,k_fit), psd_fit.csv (omega,S_ref,S_fit) and report.txt.
inline int cmd_approx(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  if (!cfg.options.contains("reference")) throw UsageError("approx: options.reference missing");
  ReferenceKernel ref;
  try {
    ref = reference_from_json(cfg.options.at("reference"));
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("approx: bad reference: ") + e.what());
  }
  const int mixands = cfg.options.value("mixands", 4);
  const int order = cfg.options.value("order", 2);
  const int restarts = cfg.options.value("restarts", 8);
  const auto nodes = cfg.options.value("nodes", std::size_t{2048});
  auto k_ref = [ref](double tau) { return reference_eval(ref, tau); };
  const auto problem = make_fit_problem(k_ref, mixands, order, nodes);
  const auto fit = fit_mixture(problem, restarts, cfg.seed);

  {
    auto f = detail::open_out(run, "mixture.json");
    f << dump_json(to_json(fit.mixture));
  }
  {
    CsvTable t{{"tau", "k_ref", "k_fit"}, {}};
    for (double tau : problem.grid.nodes) {
      t.rows.push_back({tau, k_ref(tau), mixture_eval(fit.mixture, tau)});
    }
    auto f = detail::open_out(run, "kernel_fit.csv");
    write_csv(f, t);
  }
  {
    // frequency range out to a few times the largest fitted pole
    double w_max = 0.0;
    for (const auto& c : fit.mixture.components) w_max = std::max(w_max, c.spec.b + 8.0 * c.spec.a);
    CsvTable t{{"omega", "S_ref", "S_fit"}, {}};
    constexpr int kPoints = 1025;
    for (int i = 0; i < kPoints; ++i) {
      const double w = -w_max + 2.0 * w_max * i / (kPoints - 1);
      const auto s = reference_psd(ref, w);
      t.rows.push_back({w, s ? *s : std::numeric_limits<double>::quiet_NaN(),
                        mixture_psd(fit.mixture, w)});
    }
    auto f = detail::open_out(run, "psd_fit.csv");
    write_csv(f, t);
  }
  auto r = detail::open_out(run, "report.txt");
  r << "relative_l2_error " << format_double(fit.relative_error) << '\n'
    << "distance " << format_double(fit.distance) << '\n'
    << "grid_T " << format_double(problem.grid.nodes.back()) << '\n';
  log << "approx: relative L2 error " << format_double(fit.relative_error) << '\n';
  return 0;
}

struct BenchRow {
  std::size_t m = 0;
  double seconds = 0.0;
  std::size_t transitions = 0;
  double avg_kld = std::numeric_limits<double>::quiet_NaN();
};

/// Filter+smoother wall time on the toy data for one size; KLD against the
/// dense posterior (same prior) when m <= kld_limit.
inline BenchRow bench_size(std::size_t m, double noise, std::uint64_t seed,
                           std::size_t kld_limit = 2000, int repeats = 1) {
  const auto toy = toy_dataset(m, noise, seed + m);
  const auto prior = toy_hida_matern_prior();
  const auto model = StateSpaceModel::assemble(prior, noise);
  BenchRow row;
  row.m = m;
  std::vector<double> times;
  Prediction post;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto filt = kalman_filter(model, toy.data);
    const auto sm = rts_smooth(model, filt);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    row.transitions = filt.transitions_computed;
    if (r == 0 && m <= kld_limit) {
      const SparseRow h = model.observation();
      for (std::size_t k = 0; k < sm.size(); ++k) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(sm[k].mean.size());
        for (std::size_t i = 0; i < h.index.size(); ++i) u += h.weight[i] * sm[k].cov.col(h.index[i]);
        post.mean.push_back(h.dot(sm[k].mean));
        post.variance.push_back(h.dot(u));
      }
    }
  }
  std::sort(times.begin(), times.end());
  row.seconds = times[times.size() / 2];
  if (m <= kld_limit) {
    const auto dense = exact_posterior([&](double tau) { return mixture_eval(prior, tau); },
                                       toy.data.times, toy.data.values, noise, toy.data.times);
    row.avg_kld = avg_marginal_kld(post.mean, post.variance, dense.mean, dense.variance);
  }
  return row;
}

/// Writes bench.csv (M,seconds,transitions,avg_kld).  Timings vary between
/// runs; every other column is deterministic.
inline int cmd_bench(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  const auto sizes = cfg.options.value("sizes", std::vector<std::size_t>{1000, 10000, 50000});
  const double noise = cfg.options.value("noise", 0.1);
  const auto kld_limit = cfg.options.value("kld_limit", std::size_t{2000});
  const int repeats = cfg.options.value("repeats", 1);
  CsvTable t{{"M", "seconds", "transitions", "avg_kld"}, {}};
  for (auto m : sizes) {
    const auto row = bench_size(m, noise, cfg.seed, kld_limit, repeats);
    t.rows.push_back({static_cast<double>(row.m), row.seconds, static_cast<double>(row.transitions),
                      row.avg_kld});
    log << "bench: M=" << m << " " << row.seconds << " s\n";
  }
  auto f = detail::open_out(run, "bench.csv");
  write_csv(f, t);
  return 0;
}

struct ConditionRow {
  double tau = 0.0;
  double k_raw = 0.0, k_transformed = 0.0;
  double a_raw = 0.0, a_transformed = 0.0;
  double q_raw = 0.0, q_transformed = 0.0;
};

struct ConditionMatrices {
  Eigen::MatrixXd K, A, Q;
};

/// Raw (physical) A = K(tau) K(0)^-1 and Q; the tau == 0 short-circuit gives (I, 0).
inline ConditionMatrices raw_transition(const StateSpaceModel& model, double tau) {
  ConditionMatrices m;
  m.K = model.covariance(tau);
  const int n = model.state_dim();
  if (tau == 0.0) {
    m.A = Eigen::MatrixXd::Identity(n, n);
    m.Q = Eigen::MatrixXd::Zero(n, n);
    return m;
  }
  const Eigen::MatrixXd K0 = model.covariance(0.0);
  m.A = K0.transpose().fullPivLu().solve(m.K.transpose()).transpose();
  m.Q = hermitian_part(K0 - m.A * m.K.transpose());
  return m;
}

inline ConditionMatrices transformed_transition(const StateSpaceModel& model, double tau) {
  const auto tp = model.transition(tau);
  return {model.filter_covariance(tau), tp.A, tp.Q};
}

/// Condition numbers of K^S(tau), A(tau), Q(tau) with and without the
/// correlation transform.  Q(0) = 0 reports +inf.
inline ConditionRow condition_row(const StateSpaceModel& model, double tau) {
  const auto raw = raw_transition(model, tau);
  const auto tr = transformed_transition(model, tau);
  auto cond = [](const Eigen::MatrixXd& m) {
    return m.isZero(0.0) ? std::numeric_limits<double>::infinity() : condition_number(m);
  };
  return {tau, cond(raw.K), cond(tr.K), cond(raw.A), cond(tr.A), cond(raw.Q), cond(tr.Q)};
}

/// Writes condition.csv and matrices.txt for options.taus (default
/// 0, 0.001, 0.01, 0.1, 0.5).
inline int cmd_condition(const ExperimentConfig& cfg, const RunOptions& run, std::ostream& log) {
  detail::require_kernel(cfg);
  const auto taus =
      cfg.options.value("taus", std::vector<double>{0.0, 0.001, 0.01, 0.1, 0.5});
  const auto model = StateSpaceModel::assemble(cfg.kernel, cfg.obs_noise);
  CsvTable t{{"tau", "cond_K_raw", "cond_K_transformed", "cond_A_raw", "cond_A_transformed",
              "cond_Q_raw", "cond_Q_transformed"},
             {}};
  auto dump = detail::open_out(run, "matrices.txt");
  for (double tau : taus) {
    const auto r = condition_row(model, tau);
    t.rows.push_back({r.tau, r.k_raw, r.k_transformed, r.a_raw, r.a_transformed, r.q_raw,
                      r.q_transformed});
    const auto raw = raw_transition(model, tau);
    const auto tr = transformed_transition(model, tau);
    write_matrix(dump, "K_raw", tau, raw.K);
    write_matrix(dump, "K_transformed", tau, tr.K);
    write_matrix(dump, "A_raw", tau, raw.A);
    write_matrix(dump, "A_transformed", tau, tr.A);
    write_matrix(dump, "Q_raw", tau, raw.Q);
    write_matrix(dump, "Q_transformed", tau, tr.Q);
  }
  auto f = detail::open_out(run, "condition.csv");
  write_csv(f, t);
  log << "condition: " << taus.size() << " lags\n";
  return 0;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_COMMANDS_HPP
