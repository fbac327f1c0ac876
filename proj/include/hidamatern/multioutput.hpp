// Multioutput derivative covariance [K^S(tau)]_ij = (-1)^j k^(i+j)(tau), the
// diagonal correlation transform, and structure-aware inverses of K^S(0).

#ifndef HIDAMATERN_MULTIOUTPUT_HPP
#define HIDAMATERN_MULTIOUTPUT_HPP

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hidamatern/kernel.hpp"

namespace hidamatern {

/// The 2N-1 scalar derivative functions k, k', ..., k^(2N-2) of a kernel.
/// Every entry of K^S(tau) is a signed copy of one of them.
class DerivativeTable {
 public:
  DerivativeTable() = default;
  DerivativeTable(const ExpPolyForm& kernel, int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("K^S dimension must be >= 1");
    if (dim > kernel.degree() + 1) {
      throw std::domain_error(
          "K^S dimension " + std::to_string(dim) +
          " needs derivatives beyond the kernel's smoothness (max dimension " +
          std::to_string(kernel.degree() + 1) + ")");
    }
    // One extra derivative so that dK^S/dtau is also available.
    forms_.reserve(static_cast<std::size_t>(2 * dim));
    forms_.push_back(kernel);
    for (int n = 1; n < 2 * dim; ++n) forms_.push_back(forms_.back().derivative());
  }

  int dim() const { return dim_; }
  const ExpPolyForm& derivative(int n) const { return forms_.at(static_cast<std::size_t>(n)); }

  // values[n] = k^(n)(tau) for n = 0 .. 2 dim - 2 (+ shift)
  std::vector<Complex> values(double tau, int shift = 0) const {
    std::vector<Complex> out(static_cast<std::size_t>(2 * dim_ - 1));
    for (int n = 0; n < 2 * dim_ - 1; ++n) {
      out[static_cast<std::size_t>(n)] = forms_[static_cast<std::size_t>(n + shift)].complex_value(tau);
    }
    return out;
  }

 private:
  int dim_ = 0;
  std::vector<ExpPolyForm> forms_;
};

namespace detail {

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> fill_antidiagonals(
    const std::vector<Complex>& vals, int dim) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const Complex v = (j % 2 == 0 ? 1.0 : -1.0) * vals[static_cast<std::size_t>(i + j)];
      if constexpr (std::is_same_v<Scalar, double>) {
        K(i, j) = v.real();
      } else {
        K(i, j) = v;
      }
    }
  }
  return K;
}

}  // namespace detail

/// Real K^S(tau) built from Re k^(n) (restricted-sense, b = 0 kernels).
inline Eigen::MatrixXd multioutput_covariance(const DerivativeTable& table, double tau) {
  detail::check_lag(tau);
  return detail::fill_antidiagonals<double>(table.values(tau), table.dim());
}

inline Eigen::MatrixXd multioutput_covariance(const ExpPolyForm& kernel, int dim, double tau) {
  return multioutput_covariance(DerivativeTable(kernel, dim), tau);
}

/// Complex K^S_z(tau) built from the complex derivatives k_z^(n).
inline Eigen::MatrixXcd complex_multioutput_covariance(const DerivativeTable& table,
                                                       double tau) {
  detail::check_lag(tau);
  return detail::fill_antidiagonals<Complex>(table.values(tau), table.dim());
}

inline Eigen::MatrixXcd complex_multioutput_covariance(const ExpPolyForm& kernel, int dim,
                                                       double tau) {
  return complex_multioutput_covariance(DerivativeTable(kernel, dim), tau);
}

/// Entry-wise tau-derivative of K^S evaluated at tau (right limit at 0).
inline Eigen::MatrixXcd complex_multioutput_covariance_derivative(
    const DerivativeTable& table, double tau) {
  detail::check_lag(tau);
  return detail::fill_antidiagonals<Complex>(table.values(tau, 1), table.dim());
}

template <class Scalar>
struct CorrelationTransform {
  Eigen::VectorXd scale;  // C_ii = 1 / sqrt([K0]_ii)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> transformed;
};

template <class Derived>
auto correlation_transform(const Eigen::MatrixBase<Derived>& raw_k0) {
  using Scalar = typename Derived::Scalar;
  if (raw_k0.rows() != raw_k0.cols()) {
    throw std::invalid_argument("correlation_transform: matrix must be square");
  }
  CorrelationTransform<Scalar> out;
  const auto n = raw_k0.rows();
  out.scale.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = std::real(raw_k0(i, i));
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("correlation_transform: non-positive diagonal entry");
    }
    out.scale(i) = 1.0 / std::sqrt(d);
  }
  out.transformed = out.scale.asDiagonal() * raw_k0 * out.scale.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) out.transformed(i, i) = Scalar(1.0);
  return out;
}

// (M + M^H) / 2
template <class Derived>
typename Derived::PlainObject hermitian_part(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.adjoint())).eval();
}

/// Inverse of a b = 0 K^S(0): with zeros at every odd i + j, permuting the
/// even and odd derivative indices gives two independent dense blocks.
inline Eigen::MatrixXd structured_inverse(const Eigen::MatrixXd& k0) {
  const int n = static_cast<int>(k0.rows());
  if (k0.cols() != n) throw std::invalid_argument("structured_inverse: not square");
  std::vector<int> even;
  std::vector<int> odd;
  for (int i = 0; i < n; ++i) (i % 2 == 0 ? even : odd).push_back(i);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  for (const auto* idx : {&even, &odd}) {
    const int m = static_cast<int>(idx->size());
    if (m == 0) continue;
    Eigen::MatrixXd block(m, m);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) block(r, c) = k0((*idx)[r], (*idx)[c]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      throw std::runtime_error("structured_inverse: numerically singular block");
    }
    const Eigen::MatrixXd block_inv = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) inv((*idx)[r], (*idx)[c]) = block_inv(r, c);
    }
  }
  return 0.5 * (inv + inv.transpose());
}

/// Inverse of a complex (b != 0) K^S_z(0): dense Hermitian inverse, then the
/// entries at odd i + j are forced purely imaginary and the even ones real.
inline Eigen::MatrixXcd structured_inverse(const Eigen::MatrixXcd& k0) {
  const int n = static_cast<int>(k0.rows());
  if (k0.cols() != n) throw std::invalid_argument("structured_inverse: not square");
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(k0);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().real().array() > 0.0).all()) {
    throw std::runtime_error("structured_inverse: numerically singular matrix");
  }
  Eigen::MatrixXcd inv = ldlt.solve(Eigen::MatrixXcd::Identity(n, n));
  inv = 0.5 * (inv + inv.adjoint()).eval();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if ((i + j) % 2 == 1) {
        inv(i, j) = Complex(0.0, inv(i, j).imag());
      } else {
        inv(i, j) = Complex(inv(i, j).real(), 0.0);
      }
    }
  }
  return inv;
}

/// 2-norm condition number from singular values, computed in long double so
/// that very ill-conditioned matrices still order correctly.
template <class Derived>
double condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  using Wide = std::conditional_t<std::is_same_v<Scalar, double>, long double,
                                  std::complex<long double>>;
  const Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic> w = m.template cast<Wide>();
  Eigen::JacobiSVD<Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic>> svd(w);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const long double smax = s(0);
  const long double smin = s(s.size() - 1);
  if (smin == 0.0L) return std::numeric_limits<double>::infinity();
  return static_cast<double>(smax / smin);
}

// Real realisation of a complex linear map z -> M z acting on [Re z; Im z].
inline Eigen::MatrixXd embed_operator(const Eigen::MatrixXcd& m) {
  const auto n = m.rows();
  const auto k = m.cols();
  Eigen::MatrixXd out(2 * n, 2 * k);
  out.topLeftCorner(n, k) = m.real();
  out.topRightCorner(n, k) = -m.imag();
  out.bottomLeftCorner(n, k) = m.imag();
  out.bottomRightCorner(n, k) = m.real();
  return out;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_MULTIOUTPUT_HPP
