// CSV and JSON input/output.  Numbers are written with 17 significant
// digits so that a write/read cycle reproduces every double exactly.

#ifndef HIDAMATERN_IO_HPP
#define HIDAMATERN_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hidamatern/kalman.hpp"
#include "hidamatern/kernel.hpp"
#include "hidamatern/reference_kernels.hpp"

namespace hidamatern {

using Json = nlohmann::ordered_json;

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.at(j));
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Reads a numeric CSV.  Lines starting with '#' and blank lines are
/// skipped; a first row that does not parse as numbers becomes the header.
inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto fields = detail::split_fields(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = detail::parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (t.header.empty() && t.rows.empty()) {
        t.header = fields;
        continue;
      }
      throw std::runtime_error("read_csv: non-numeric field on line " + std::to_string(lineno));
    }
    if (!t.rows.empty() && row.size() != t.rows.front().size()) {
      throw std::runtime_error("read_csv: ragged row on line " + std::to_string(lineno));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
  for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
  if (!t.header.empty()) out << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << format_double(r[j]);
    out << '\n';
  }
}

/// Time series from a `t,y` CSV (the first two columns).  Unsorted input
/// is sorted by time.
inline Dataset read_series(std::istream& in) {
  const auto t = read_csv(in);
  if (t.rows.empty()) throw std::runtime_error("read_series: no data rows");
  if (t.rows.front().size() < 2) throw std::runtime_error("read_series: need t,y columns");
  return make_dataset(t.column(0), t.column(1));
}

inline Dataset read_series_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_series(in);
}

inline void write_series(std::ostream& out, const Dataset& d) {
  CsvTable t{{"t", "y"}, {}};
  for (std::size_t i = 0; i < d.size(); ++i) t.rows.push_back({d.times[i], d.values[i]});
  write_csv(out, t);
}

inline void write_prediction(std::ostream& out, const Prediction& p) {
  CsvTable t{{"t", "mean", "variance"}, {}};
  for (std::size_t i = 0; i < p.times.size(); ++i) {
    t.rows.push_back({p.times[i], p.mean[i], p.variance[i]});
  }
  write_csv(out, t);
}

inline Prediction read_prediction(std::istream& in) {
  const auto t = read_csv(in);
  Prediction p;
  if (!t.rows.empty() && t.rows.front().size() < 3) {
    throw std::runtime_error("read_prediction: need t,mean,variance columns");
  }
  for (const auto& r : t.rows) {
    p.times.push_back(r[0]);
    p.mean.push_back(r[1]);
    p.variance.push_back(r[2]);
  }
  return p;
}

/// `t,draw_0,...` with draws[d][k] as produced by sample_prior.
inline void write_samples(std::ostream& out, const std::vector<double>& times,
                          const std::vector<std::vector<double>>& draws) {
  CsvTable t;
  t.header.push_back("t");
  for (std::size_t d = 0; d < draws.size(); ++d) t.header.push_back("draw_" + std::to_string(d));
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> row{times[k]};
    for (const auto& d : draws) row.push_back(d.at(k));
    t.rows.push_back(std::move(row));
  }
  write_csv(out, t);
}

/// Matrix dump: a `# name, rows, tau` comment line then the rows.
inline void write_matrix(std::ostream& out, const std::string& name, double tau,
                         const Eigen::MatrixXd& m) {
  out << "# " << name << ", " << m.rows() << ", " << format_double(tau) << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

// ---------------------------------------------------------------- JSON

inline Json to_json(const MixtureSpec& mix) {
  Json comps = Json::array();
  for (const auto& c : mix.components) {
    comps.push_back({{"sigma2", c.spec.sigma2},
                     {"a", c.spec.a},
                     {"b", c.spec.b},
                     {"p", c.spec.p},
                     {"weight", c.weight}});
  }
  return Json{{"components", comps}};
}

inline MixtureSpec mixture_from_json(const Json& j) {
  MixtureSpec mix;
  for (const auto& c : j.at("components")) {
    MixtureComponent comp;
    comp.spec.sigma2 = c.value("sigma2", 1.0);
    comp.spec.a = c.at("a").get<double>();
    comp.spec.b = c.value("b", 0.0);
    comp.spec.p = c.at("p").get<int>();
    comp.weight = c.value("weight", 1.0);
    mix.components.push_back(comp);
  }
  validate(mix);
  return mix;
}

/// Reference kernels by name: se, rq, gabor, sinc, matern12/32/52 or
/// matern (with p), sm, periodic.
inline ReferenceKernel reference_from_json(const Json& j) {
  const auto name = j.at("name").get<std::string>();
  ReferenceKernel ref;
  if (name == "se") {
    ref = SquaredExponential{j.value("sigma2", 1.0), j.value("l", 1.0)};
  } else if (name == "rq") {
    ref = RationalQuadratic{j.value("alpha", 1.0), j.value("l", 1.0)};
  } else if (name == "gabor") {
    ref = Gabor{j.value("sigma2", 1.0), j.value("l", 1.0), j.value("b", 0.0)};
  } else if (name == "sinc") {
    ref = Sinc{j.value("sigma2", 1.0), j.value("delta", 1.0), j.value("b", 0.0)};
  } else if (name == "matern12" || name == "matern32" || name == "matern52" || name == "matern") {
    const int p = name == "matern12" ? 0 : name == "matern32" ? 1 : name == "matern52" ? 2
                                                                   : j.at("p").get<int>();
    ref = MaternHalfInteger{j.value("sigma2", 1.0), j.value("l", 1.0), p};
  } else if (name == "sm") {
    SpectralMixture sm;
    for (const auto& t : j.at("terms")) {
      sm.terms.push_back({t.value("sigma2", 1.0), t.value("l", 1.0), t.value("omega", 0.0)});
    }
    ref = sm;
  } else if (name == "periodic") {
    ref = Periodic{j.value("sigma2", 1.0), j.value("l", 1.0), j.value("omega0", 1.0)};
  } else {
    throw std::out_of_range("unknown reference kernel '" + name + "'");
  }
  validate(ref);
  return ref;
}

/// Query times: an explicit list or a uniform grid start:step:stop (inclusive).
struct QuerySpec {
  std::vector<double> times;
  std::optional<double> start, stop, step;

  std::vector<double> resolve() const {
    if (start && stop && step) {
      if (!(*step > 0.0) || *stop < *start) throw std::invalid_argument("query grid is empty");
      std::vector<double> out;
      const auto n = static_cast<std::size_t>(std::floor((*stop - *start) / *step + 1e-9));
      for (std::size_t i = 0; i <= n; ++i) out.push_back(*start + *step * static_cast<double>(i));
      return out;
    }
    return times;
  }
};

struct ExperimentConfig {
  MixtureSpec kernel;
  double obs_noise = 0.1;
  std::string data;
  QuerySpec query;
  std::uint64_t seed = 0;
  Json options = Json::object();  // command-specific settings
};

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["kernel"] = to_json(c.kernel);
  j["obs_noise"] = c.obs_noise;
  j["data"] = c.data;
  Json q = Json::object();
  if (c.query.start && c.query.stop && c.query.step) {
    q["start"] = *c.query.start;
    q["stop"] = *c.query.stop;
    q["step"] = *c.query.step;
  } else {
    q["times"] = c.query.times;
  }
  j["query"] = q;
  j["seed"] = c.seed;
  j["options"] = c.options;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  if (j.contains("kernel")) c.kernel = mixture_from_json(j.at("kernel"));
  c.obs_noise = j.value("obs_noise", 0.1);
  c.data = j.value("data", std::string{});
  if (j.contains("query")) {
    const auto& q = j.at("query");
    if (q.contains("times")) c.query.times = q.at("times").get<std::vector<double>>();
    if (q.contains("start")) c.query.start = q.at("start").get<double>();
    if (q.contains("stop")) c.query.stop = q.at("stop").get<double>();
    if (q.contains("step")) c.query.step = q.at("step").get<double>();
  }
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("options")) c.options = j.at("options");
  return c;
}

inline std::string dump_json(const Json& j) {
  // nlohmann prints doubles with enough digits to round-trip exactly
  return j.dump(2) + "\n";
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

}  // namespace hidamatern

#endif  // HIDAMATERN_IO_HPP
