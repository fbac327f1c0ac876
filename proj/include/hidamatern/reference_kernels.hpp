// Stationary comparison kernels (squared exponential, rational quadratic,
// Gabor, sinc, half-integer Matern, spectral mixture, periodic) with
// closed-form PSDs where one exists.

#ifndef HIDAMATERN_REFERENCE_KERNELS_HPP
#define HIDAMATERN_REFERENCE_KERNELS_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <variant>
#include <vector>

#include "hidamatern/kernel.hpp"

namespace hidamatern {

struct SquaredExponential {
  double sigma2 = 1.0;
  double l = 1.0;
};

struct RationalQuadratic {
  double alpha = 1.0;
  double l = 1.0;
};

// sigma2 cos(2 pi b tau) exp(-tau^2 / 2l^2), b in cycles per unit time.
struct Gabor {
  double sigma2 = 1.0;
  double l = 1.0;
  double b = 0.0;
};

// sigma2 sinc(delta tau) cos(2 pi b tau) with the normalised sinc.
struct Sinc {
  double sigma2 = 1.0;
  double delta = 1.0;
  double b = 0.0;
};

struct MaternHalfInteger {
  double sigma2 = 1.0;
  double l = 1.0;
  int p = 0;
};

struct SpectralMixtureTerm {
  double sigma2 = 1.0;
  double l = 1.0;
  double omega = 0.0;  // angular frequency
};

struct SpectralMixture {
  std::vector<SpectralMixtureTerm> terms;
};

struct Periodic {
  double sigma2 = 1.0;
  double l = 1.0;
  double omega0 = 1.0;
};

using ReferenceKernel = std::variant<SquaredExponential, RationalQuadratic, Gabor,
                                     Sinc, MaternHalfInteger, SpectralMixture,
                                     Periodic>;

namespace detail {

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("reference kernel: ") + what +
                                " must be positive");
  }
}

inline double normalized_sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - std::pow(std::numbers::pi * x, 2) / 6.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Gaussian spectral lobe of sigma2 exp(-tau^2/2l^2) cos(omega tau).
inline double gaussian_lobes(double sigma2, double l, double centre, double omega) {
  const double g = sigma2 * std::sqrt(2.0 * std::numbers::pi) * l;
  const double lo = omega - centre;
  const double hi = omega + centre;
  return 0.5 * g * (std::exp(-0.5 * l * l * lo * lo) + std::exp(-0.5 * l * l * hi * hi));
}

}  // namespace detail

inline void validate(const ReferenceKernel& ref) {
  using detail::require_positive;
  std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, SquaredExponential>) {
          require_positive(k.sigma2, "sigma2");
          require_positive(k.l, "l");
        } else if constexpr (std::is_same_v<T, RationalQuadratic>) {
          require_positive(k.alpha, "alpha");
          require_positive(k.l, "l");
        } else if constexpr (std::is_same_v<T, Gabor>) {
          require_positive(k.sigma2, "sigma2");
          require_positive(k.l, "l");
        } else if constexpr (std::is_same_v<T, Sinc>) {
          require_positive(k.sigma2, "sigma2");
          require_positive(k.delta, "delta");
        } else if constexpr (std::is_same_v<T, MaternHalfInteger>) {
          require_positive(k.sigma2, "sigma2");
          require_positive(k.l, "l");
          if (k.p < 0 || k.p > kMaxOrder) {
            throw std::invalid_argument("reference kernel: bad Matern order");
          }
        } else if constexpr (std::is_same_v<T, SpectralMixture>) {
          if (k.terms.empty()) {
            throw std::invalid_argument("reference kernel: empty spectral mixture");
          }
          for (const auto& t : k.terms) {
            require_positive(t.sigma2, "sigma2");
            require_positive(t.l, "l");
          }
        } else {
          require_positive(k.sigma2, "sigma2");
          require_positive(k.l, "l");
          require_positive(k.omega0, "omega0");
        }
      },
      ref);
}

inline double reference_eval(const ReferenceKernel& ref, double tau) {
  validate(ref);
  detail::check_lag(tau);
  return std::visit(
      [tau](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        constexpr double two_pi = 2.0 * std::numbers::pi;
        if constexpr (std::is_same_v<T, SquaredExponential>) {
          return k.sigma2 * std::exp(-tau * tau / (2.0 * k.l * k.l));
        } else if constexpr (std::is_same_v<T, RationalQuadratic>) {
          return std::pow(1.0 + tau * tau / (2.0 * k.alpha * k.l * k.l), -k.alpha);
        } else if constexpr (std::is_same_v<T, Gabor>) {
          return k.sigma2 * std::cos(two_pi * k.b * tau) *
                 std::exp(-tau * tau / (2.0 * k.l * k.l));
        } else if constexpr (std::is_same_v<T, Sinc>) {
          return k.sigma2 * detail::normalized_sinc(k.delta * tau) *
                 std::cos(two_pi * k.b * tau);
        } else if constexpr (std::is_same_v<T, MaternHalfInteger>) {
          const double nu = k.p + 0.5;
          return k.sigma2 * detail::unit_matern(k.p, std::sqrt(2.0 * nu) * tau / k.l);
        } else if constexpr (std::is_same_v<T, SpectralMixture>) {
          double total = 0.0;
          for (const auto& t : k.terms) {
            total += t.sigma2 * std::exp(-tau * tau / (2.0 * t.l * t.l)) *
                     std::cos(t.omega * tau);
          }
          return total;
        } else {
          const double s = std::sin(k.omega0 * tau / 2.0);
          return k.sigma2 * std::exp(-2.0 * s * s / (k.l * k.l));
        }
      },
      ref);
}

/// Closed-form PSD (convention k(tau) = 1/2pi int S(w) e^{jw tau} dw), or
/// nullopt for kernels without a simple one (rational quadratic, periodic).
inline std::optional<double> reference_psd(const ReferenceKernel& ref, double omega) {
  validate(ref);
  return std::visit(
      [omega](const auto& k) -> std::optional<double> {
        using T = std::decay_t<decltype(k)>;
        constexpr double two_pi = 2.0 * std::numbers::pi;
        if constexpr (std::is_same_v<T, SquaredExponential>) {
          return detail::gaussian_lobes(k.sigma2, k.l, 0.0, omega);
        } else if constexpr (std::is_same_v<T, Gabor>) {
          return detail::gaussian_lobes(k.sigma2, k.l, two_pi * k.b, omega);
        } else if constexpr (std::is_same_v<T, Sinc>) {
          // rect of half-width pi*delta and height sigma2/delta, split in two lobes
          const double half = std::numbers::pi * k.delta;
          const double c = two_pi * k.b;
          double s = 0.0;
          if (std::abs(omega - c) <= half) s += 0.5;
          if (std::abs(omega + c) <= half) s += 0.5;
          return k.sigma2 / k.delta * s;
        } else if constexpr (std::is_same_v<T, MaternHalfInteger>) {
          const double nu = k.p + 0.5;
          return eval_psd(HidaMaternSpec{k.sigma2, std::sqrt(2.0 * nu) / k.l, 0.0, k.p},
                          omega);
        } else if constexpr (std::is_same_v<T, SpectralMixture>) {
          double total = 0.0;
          for (const auto& t : k.terms) {
            total += detail::gaussian_lobes(t.sigma2, t.l, t.omega, omega);
          }
          return total;
        } else {
          return std::nullopt;
        }
      },
      ref);
}

/// Variance k(0) of the reference kernel.
inline double reference_variance(const ReferenceKernel& ref) {
  return reference_eval(ref, 0.0);
}

}  // namespace hidamatern

#endif  // HIDAMATERN_REFERENCE_KERNELS_HPP
