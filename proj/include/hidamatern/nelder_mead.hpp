// Derivative-free Nelder-Mead simplex minimisation (standard coefficients,
// shrink on failed contraction).  Non-finite objective values count as +inf.

#ifndef HIDAMATERN_NELDER_MEAD_HPP
#define HIDAMATERN_NELDER_MEAD_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace hidamatern {

struct SimplexOptions {
  int max_evaluations = 4000;
  double f_tolerance = 1e-14;  // spread of objective values across the simplex
  double x_tolerance = 1e-10;  // simplex diameter
  double initial_step = 0.5;
  int restarts = 3;            // fresh simplex around the best point after convergence
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& start, const SimplexOptions& opts = {}) {
  const auto n = start.size();
  SimplexResult res;
  res.x = start;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  res.value = eval(start);
  if (n == 0) {
    res.converged = true;
    return res;
  }

  for (int round = 0; round <= opts.restarts; ++round) {
    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), res.x);
    std::vector<double> vals(static_cast<std::size_t>(n + 1), res.value);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& p = pts[static_cast<std::size_t>(i + 1)];
      p(i) += opts.initial_step;
      vals[static_cast<std::size_t>(i + 1)] = eval(p);
    }
    std::vector<std::size_t> idx(pts.size());
    bool converged = false;
    while (res.evaluations < opts.max_evaluations) {
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](auto l, auto r) { return vals[l] < vals[r]; });
      const auto best = idx.front();
      const auto worst = idx.back();
      const auto second = idx[idx.size() - 2];
      double diameter = 0.0;
      for (const auto& p : pts) diameter = std::max(diameter, (p - pts[best]).cwiseAbs().maxCoeff());
      const double spread = vals[worst] - vals[best];
      if ((std::isfinite(spread) && spread <= opts.f_tolerance * (1.0 + std::abs(vals[best])) &&
           diameter <= std::sqrt(opts.x_tolerance)) ||
          diameter <= opts.x_tolerance) {
        converged = true;
        break;
      }
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (auto i : idx) {
        if (i != worst) centroid += pts[i];
      }
      centroid /= static_cast<double>(n);
      const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
      const double fr = eval(xr);
      if (fr < vals[best]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
        const double fe = eval(xe);
        if (fe < fr) {
          pts[worst] = xe;
          vals[worst] = fe;
        } else {
          pts[worst] = xr;
          vals[worst] = fr;
        }
      } else if (fr < vals[second]) {
        pts[worst] = xr;
        vals[worst] = fr;
      } else {
        const bool outside = fr < vals[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                           : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[worst])) {
          pts[worst] = xc;
          vals[worst] = fc;
        } else {
          for (auto i : idx) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            vals[i] = eval(pts[i]);
          }
        }
      }
    }
    const auto best_it = std::min_element(vals.begin(), vals.end());
    const auto best = static_cast<std::size_t>(best_it - vals.begin());
    const bool improved = vals[best] < res.value;
    if (vals[best] <= res.value) {
      res.value = vals[best];
      res.x = pts[best];
    }
    res.converged = converged;
    if (!converged || (!improved && round > 0)) break;
  }
  return res;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_NELDER_MEAD_HPP
