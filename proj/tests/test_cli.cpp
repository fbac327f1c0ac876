#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hidamatern/commands.hpp"
#include "hidamatern/synthetic.hpp"

using namespace hidamatern;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("hm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string data_file(const fs::path& dir, const Dataset& d) {
  const auto p = dir / "data.csv";
  std::ofstream out(p);
  write_series(out, d);
  return p.string();
}

Dataset ou_series(std::size_t m, double noise, std::uint64_t seed) {
  const auto model = StateSpaceModel::assemble({{{1.0, {1.0, 1.0, 0.0, 0}}}}, noise);
  std::vector<double> times;
  for (std::size_t i = 0; i < m; ++i) times.push_back(0.1 * static_cast<double>(i));
  auto y = sample_prior(model, times, seed)[0];
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> eps(0.0, std::sqrt(noise));
  for (auto& v : y) v += eps(rng);
  return make_dataset(times, y);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::ostringstream sink;

}  // namespace

// ------------------------------------------------------------ formats

TEST(Formats, DoublesRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, i % 40 - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
}

TEST(Formats, PredictionCsvRoundTrip) {
  Prediction p{{0.0, 0.1, 1e-7}, {1.0 / 3.0, -2.5, 1e300}, {0.2, 1e-17, 3.0}};
  std::stringstream ss;
  write_prediction(ss, p);
  EXPECT_EQ(ss.str().substr(0, 16), "t,mean,variance\n");
  const auto q = read_prediction(ss);
  EXPECT_EQ(q.times, p.times);
  EXPECT_EQ(q.mean, p.mean);
  EXPECT_EQ(q.variance, p.variance);
}

TEST(Formats, SeriesCsvRoundTrip) {
  const auto d = make_dataset({0.3, 0.1, 0.2}, {1.0 / 7.0, 2.0, -3.0});
  std::stringstream ss;
  write_series(ss, d);
  const auto e = read_series(ss);
  EXPECT_EQ(e.times, d.times);
  EXPECT_EQ(e.values, d.values);
}

TEST(Formats, CsvReaderConventions) {
  std::stringstream headerless("# comment\n\n1,2\n3, 4\n");
  const auto t = read_csv(headerless);
  EXPECT_TRUE(t.header.empty());
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], 4.0);
  std::stringstream bad("t,y\n1,2\n3,x\n");
  EXPECT_THROW(read_csv(bad), std::runtime_error);
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_csv(ragged), std::runtime_error);
  std::stringstream empty("t,y\n");
  EXPECT_THROW(read_series(empty), std::runtime_error);
}

TEST(Formats, MixtureJsonRoundTrip) {
  const MixtureSpec mix = co2_prior();
  const auto back = mixture_from_json(to_json(mix));
  ASSERT_EQ(back.components.size(), mix.components.size());
  for (std::size_t i = 0; i < mix.components.size(); ++i) {
    EXPECT_EQ(back.components[i].weight, mix.components[i].weight);
    EXPECT_EQ(back.components[i].spec.a, mix.components[i].spec.a);
    EXPECT_EQ(back.components[i].spec.b, mix.components[i].spec.b);
    EXPECT_EQ(back.components[i].spec.p, mix.components[i].spec.p);
  }
}

TEST(Formats, ConfigRoundTripIsStable) {
  ExperimentConfig c;
  c.kernel = co2_prior();
  c.obs_noise = 0.09;
  c.data = "co2.csv";
  c.query.start = 2004.0;
  c.query.stop = 2020.0;
  c.query.step = 1.0 / 12.0;
  c.seed = 18446744073709551615ull;
  c.options = {{"center", true}, {"restarts", 3}};
  const std::string once = dump_json(to_json(c));
  const std::string twice = dump_json(to_json(config_from_json(Json::parse(once))));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(config_from_json(Json::parse(once)).seed, c.seed);
  c.query = {};
  c.query.times = {0.1, 0.2};
  const std::string list = dump_json(to_json(c));
  EXPECT_EQ(list, dump_json(to_json(config_from_json(Json::parse(list)))));
}

TEST(Formats, QueryGridIsInclusive) {
  QuerySpec q;
  q.start = 0.0;
  q.stop = 1.0;
  q.step = 0.1;
  EXPECT_EQ(q.resolve().size(), 11u);
  q.stop = -1.0;
  EXPECT_THROW(q.resolve(), std::invalid_argument);
}

TEST(Formats, ReferenceKernelNames) {
  for (const char* name : {"se", "rq", "gabor", "sinc", "matern12", "matern32", "matern52"}) {
    EXPECT_NO_THROW(reference_from_json(Json{{"name", name}})) << name;
  }
  EXPECT_NO_THROW(reference_from_json(Json{{"name", "matern"}, {"p", 4}}));
  EXPECT_NO_THROW(reference_from_json(Json::parse(R"({"name":"sm","terms":[{"l":1,"omega":2}]})")));
  EXPECT_THROW(reference_from_json(Json{{"name", "bessel"}}), std::out_of_range);
}

// ------------------------------------------------------------ commands

TEST(Commands, FitWithoutOptimisationOnCo2Config) {
  const auto dir = scratch("fit_noopt");
  const auto s = co2_like_series(1974.0, 2004.0, 0.3, 7);
  ExperimentConfig cfg;
  cfg.kernel = co2_prior();
  cfg.obs_noise = 0.09;
  cfg.data = data_file(dir, make_dataset(s.times, s.values));
  EXPECT_EQ(cmd_fit(cfg, {dir.string(), true}, sink), 0);
  const auto report = slurp(dir / "report.txt");
  const auto pos = report.find("log_likelihood ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_TRUE(std::isfinite(std::stod(report.substr(pos + 15))));
  const auto fitted = config_from_json(read_json_file((dir / "fitted.json").string()));
  EXPECT_EQ(fitted.kernel.components[0].spec.b, cfg.kernel.components[0].spec.b);
  EXPECT_NEAR(fitted.obs_noise, 0.09, 1e-15);
}

TEST(Commands, FitIsDeterministic) {
  const auto dir = scratch("fit_det");
  ExperimentConfig cfg;
  cfg.kernel = {{{1.0, {1.0, 0.5, 0.0, 1}}}};
  cfg.data = data_file(dir, ou_series(200, 0.05, 3));
  cfg.seed = 11;
  cfg.options = {{"restarts", 1}, {"max_evaluations", 300}};
  const auto a = dir / "a", b = dir / "b";
  EXPECT_EQ(cmd_fit(cfg, {a.string(), false}, sink), 0);
  EXPECT_EQ(cmd_fit(cfg, {b.string(), false}, sink), 0);
  EXPECT_EQ(slurp(a / "fitted.json"), slurp(b / "fitted.json"));
  EXPECT_EQ(slurp(a / "report.txt"), slurp(b / "report.txt"));
}

TEST(Commands, FitRequiresData) {
  ExperimentConfig cfg;
  cfg.kernel = co2_prior();
  EXPECT_THROW(cmd_fit(cfg, {scratch("nodata").string(), true}, sink), UsageError);
  cfg.data = "/nonexistent/data.csv";
  EXPECT_THROW(cmd_fit(cfg, {scratch("nodata").string(), true}, sink), UsageError);
}

TEST(Commands, PredictInterpolatesTrainingTimes) {
  const auto dir = scratch("predict_interp");
  const double noise = 0.01;
  const auto d = ou_series(300, noise, 5);
  ExperimentConfig cfg;
  cfg.kernel = {{{1.0, {1.0, 1.0, 0.0, 0}}}};
  cfg.obs_noise = noise;
  cfg.data = data_file(dir, d);
  cfg.query.times = d.times;
  cfg.options = {{"center", false}, {"scale", false}};
  EXPECT_EQ(cmd_predict(cfg, {dir.string(), false}, sink), 0);
  std::ifstream in(dir / "predictions.csv");
  const auto p = read_prediction(in);
  double ss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) ss += (p.mean[i] - d.values[i]) * (p.mean[i] - d.values[i]);
  EXPECT_LT(std::sqrt(ss / d.size()), std::sqrt(noise));
  EXPECT_FALSE(fs::exists(dir / "component_0.csv"));  // per-component files only for mixtures
}

TEST(Commands, PredictVarianceGrowsBeyondData) {
  const auto dir = scratch("predict_var");
  ExperimentConfig cfg;
  cfg.kernel = {{{1.0, {1.0, 0.7, 0.0, 2}}}};
  cfg.data = data_file(dir, ou_series(100, 0.1, 6));
  cfg.query.start = 10.0;
  cfg.query.stop = 30.0;
  cfg.query.step = 0.25;
  EXPECT_EQ(cmd_predict(cfg, {dir.string(), false}, sink), 0);
  std::ifstream in(dir / "predictions.csv");
  const auto p = read_prediction(in);
  for (std::size_t i = 1; i < p.variance.size(); ++i) EXPECT_GE(p.variance[i], p.variance[i - 1]);
}

TEST(Commands, PredictRejectsEmptyGrid) {
  const auto dir = scratch("predict_empty");
  ExperimentConfig cfg;
  cfg.kernel = co2_prior();
  cfg.data = data_file(dir, ou_series(10, 0.1, 1));
  EXPECT_THROW(cmd_predict(cfg, {dir.string(), false}, sink), UsageError);
}

TEST(Commands, Co2ExtrapolationBeatsMeanBaseline) {
  const auto dir = scratch("co2");
  const auto s = co2_like_series(1974.0, 2020.0, 0.3, 7);
  std::vector<double> tt, ty, qt, qy, qs;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] < 2004.0) {
      tt.push_back(s.times[i]);
      ty.push_back(s.values[i]);
    } else {
      qt.push_back(s.times[i]);
      qy.push_back(s.values[i]);
      qs.push_back(s.seasonal[i]);
    }
  }
  ExperimentConfig cfg;
  cfg.kernel = co2_prior();
  cfg.obs_noise = 0.09;
  cfg.data = data_file(dir, make_dataset(tt, ty));
  cfg.query.times = qt;
  ASSERT_EQ(cmd_predict(cfg, {dir.string(), false}, sink), 0);
  std::ifstream in(dir / "predictions.csv");
  const auto p = read_prediction(in);
  double mean = 0.0;
  for (double v : ty) mean += v / static_cast<double>(ty.size());
  double se_model = 0.0, se_base = 0.0;
  for (std::size_t i = 0; i < qt.size(); ++i) {
    se_model += (p.mean[i] - qy[i]) * (p.mean[i] - qy[i]);
    se_base += (mean - qy[i]) * (mean - qy[i]);
  }
  EXPECT_LT(se_model, se_base);
  std::ifstream cin(dir / "component_0.csv");
  const auto seasonal = read_prediction(cin);
  EXPECT_GT(pearson(seasonal.mean, qs), 0.9);
}

TEST(Commands, SampleIsReproducibleAndCalibrated) {
  const auto dir = scratch("sample");
  const double a = 1.5, delta = 0.2;
  ExperimentConfig cfg;
  cfg.kernel = {{{1.0, {1.0, a, 0.0, 0}}}};
  cfg.query.times = {0.0, delta};
  cfg.seed = 42;
  cfg.options = {{"draws", 10000}};
  ASSERT_EQ(cmd_sample(cfg, {(dir / "a").string(), false}, sink), 0);
  ASSERT_EQ(cmd_sample(cfg, {(dir / "b").string(), false}, sink), 0);
  EXPECT_EQ(slurp(dir / "a" / "samples.csv"), slurp(dir / "b" / "samples.csv"));
  const auto t = read_csv_file((dir / "a" / "samples.csv").string());
  ASSERT_EQ(t.header.size(), 10001u);
  const std::size_t n = 10000;
  std::vector<double> x0(t.rows[0].begin() + 1, t.rows[0].end());
  std::vector<double> x1(t.rows[1].begin() + 1, t.rows[1].end());
  double var = 0.0;
  for (double v : x0) var += v * v / static_cast<double>(n);
  EXPECT_NEAR(var, 1.0, 3.0 * std::sqrt(2.0 / n));
  const double rho = std::exp(-a * delta);
  EXPECT_NEAR(pearson(x0, x1), rho, 3.0 * (1.0 - rho * rho) / std::sqrt(static_cast<double>(n)));
}

TEST(Commands, ApproxInFamilyAndCsvs) {
  const auto dir = scratch("approx");
  ExperimentConfig cfg;
  cfg.options = {{"reference", {{"name", "matern32"}, {"l", 0.7}}}, {"mixands", 1}, {"order", 1},
                 {"restarts", 4}};
  ASSERT_EQ(cmd_approx(cfg, {dir.string(), false}, sink), 0);
  const auto report = slurp(dir / "report.txt");
  EXPECT_LT(std::stod(report.substr(report.find(' ') + 1)), 1e-8);
  const auto k = read_csv_file((dir / "kernel_fit.csv").string());
  EXPECT_EQ(k.header, (std::vector<std::string>{"tau", "k_ref", "k_fit"}));
  for (const auto& r : k.rows) EXPECT_NEAR(r[1], r[2], 1e-5);
  const auto s = read_csv_file((dir / "psd_fit.csv").string());
  EXPECT_EQ(s.header, (std::vector<std::string>{"omega", "S_ref", "S_fit"}));
  const auto mix = mixture_from_json(read_json_file((dir / "mixture.json").string()));
  EXPECT_NEAR(mix.components[0].spec.a, std::sqrt(3.0) / 0.7, 1e-4);
}

TEST(Commands, ApproxSquaredExponential) {
  const auto dir = scratch("approx_se");
  ExperimentConfig cfg;
  cfg.seed = 1;
  cfg.options = {{"reference", {{"name", "se"}}}};
  ASSERT_EQ(cmd_approx(cfg, {dir.string(), false}, sink), 0);
  const auto report = slurp(dir / "report.txt");
  EXPECT_LT(std::stod(report.substr(report.find(' ') + 1)), 5e-2);
  EXPECT_EQ(mixture_from_json(read_json_file((dir / "mixture.json").string())).components.size(), 4u);
}

TEST(Commands, ApproxUnknownReference) {
  ExperimentConfig cfg;
  cfg.options = {{"reference", {{"name", "bessel"}}}};
  EXPECT_THROW(cmd_approx(cfg, {scratch("approx_bad").string(), false}, sink), UsageError);
  cfg.options = Json::object();
  EXPECT_THROW(cmd_approx(cfg, {scratch("approx_bad").string(), false}, sink), UsageError);
}

TEST(Commands, BenchSmallSizes) {
  const auto dir = scratch("bench");
  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.options = {{"sizes", {500, 2000}}};
  ASSERT_EQ(cmd_bench(cfg, {dir.string(), false}, sink), 0);
  const auto t = read_csv_file((dir / "bench.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"M", "seconds", "transitions", "avg_kld"}));
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& r : t.rows) {
    EXPECT_GT(r[1], 0.0);
    EXPECT_EQ(r[2], 1.0);  // uniform grid: a single transition pair
    EXPECT_LT(r[3], 1e-9);
  }
}

TEST(Commands, ConditionHighOrder) {
  const auto dir = scratch("condition");
  ExperimentConfig cfg;
  cfg.kernel = {{{1.0, {1.0, 1.0, 0.0, 8}}}};
  ASSERT_EQ(cmd_condition(cfg, {dir.string(), false}, sink), 0);
  const auto t = read_csv_file((dir / "condition.csv").string());
  ASSERT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows[0][0], 0.0);
  EXPECT_GE(t.rows[0][1] / t.rows[0][2], 1e3);
  EXPECT_EQ(t.rows[0][4], 1.0);  // A = I at tau = 0
  // unit diagonal of the transformed K^S(0) in the dump
  std::ifstream in(dir / "matrices.txt");
  std::string line;
  while (std::getline(in, line) && line != "# K_transformed, 9, 0") {
  }
  for (int i = 0; i < 9; ++i) {
    ASSERT_TRUE(std::getline(in, line));
    std::stringstream row(line);
    std::string field;
    for (int j = 0; j <= i; ++j) std::getline(row, field, ',');
    EXPECT_NEAR(std::stod(field), 1.0, 1e-12) << i;
  }
}

// ------------------------------------------------------------ binary

TEST(Binary, ExitStatuses) {
  const auto dir = scratch("binary");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("fit --bogus"), 2);

  write_file(dir / "bad_ref.json", R"({"options": {"reference": {"name": "bessel"}}})");
  EXPECT_EQ(run_cli("approx --config " + (dir / "bad_ref.json").string() + " --out " + dir.string()), 2);

  write_file(dir / "kernel.json", dump_json(to_json(ExperimentConfig{co2_prior(), 0.09, "", {}, 0, {}})));
  write_file(dir / "empty.csv", "t,y\n");
  EXPECT_NE(run_cli("fit --no-opt --config " + (dir / "kernel.json").string() + " --data " +
                    (dir / "empty.csv").string() + " --out " + dir.string()),
            0);
  EXPECT_EQ(run_cli("fit --no-opt --config " + (dir / "kernel.json").string() + " --out " + dir.string()), 2);
}

TEST(Binary, SampleSeedFlagOverridesConfig) {
  const auto dir = scratch("binary_sample");
  ExperimentConfig cfg{{{{1.0, {1.0, 1.0, 0.0, 1}}}}, 0.1, "", {}, 5, {{"draws", 3}}};
  cfg.query.times = {0.0, 0.5, 1.0};
  write_file(dir / "cfg.json", dump_json(to_json(cfg)));
  const std::string base = "sample --config " + (dir / "cfg.json").string();
  ASSERT_EQ(run_cli(base + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 5 --out " + (dir / "b").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 6 --out " + (dir / "c").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "samples.csv"), slurp(dir / "b" / "samples.csv"));
  EXPECT_NE(slurp(dir / "a" / "samples.csv"), slurp(dir / "c" / "samples.csv"));
}
