// Hida-Matern elementary kernels, their spectral densities, the
// exponential-polynomial algebra used for analytic derivatives, and
// nonnegative mixtures.
//
// Conventions: an elementary kernel is
//
//   k(tau) = sigma2 * cos(b tau) * m_p(a tau)
//
// where m_p is the unit-variance half-integer Matern of order p + 1/2 with
// decay rate a (sqrt(2 nu) / l = a).  Its PSD has poles at +-b +- ja.

#ifndef HIDAMATERN_KERNEL_HPP
#define HIDAMATERN_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace hidamatern {

using Complex = std::complex<double>;

inline constexpr int kMaxOrder = 20;

struct HidaMaternSpec {
  double sigma2 = 1.0;
  double a = 1.0;
  double b = 0.0;
  int p = 0;

  bool operator==(const HidaMaternSpec&) const = default;
};

inline void validate(const HidaMaternSpec& spec) {
  if (!std::isfinite(spec.sigma2) || !std::isfinite(spec.a) ||
      !std::isfinite(spec.b)) {
    throw std::invalid_argument("HidaMaternSpec: non-finite hyperparameter");
  }
  if (spec.sigma2 <= 0.0) {
    throw std::invalid_argument("HidaMaternSpec: sigma2 must be positive");
  }
  if (spec.a <= 0.0) {
    throw std::invalid_argument("HidaMaternSpec: a must be positive");
  }
  if (spec.b < 0.0) {
    throw std::invalid_argument("HidaMaternSpec: b must be non-negative");
  }
  if (spec.p < 0 || spec.p > kMaxOrder) {
    throw std::invalid_argument("HidaMaternSpec: p must lie in [0, " +
                                std::to_string(kMaxOrder) + "]");
  }
}

namespace detail {

inline void check_lag(double tau) {
  if (!std::isfinite(tau)) {
    throw std::invalid_argument("kernel lag must be finite");
  }
  if (tau < 0.0) {
    throw std::invalid_argument("kernel lag must be non-negative");
  }
}

// Coefficients w_k of m_p(x) = exp(-x) * sum_k w_k x^k, k = 0..p.
//
//   w_k = 2^k * C(p, k) / ((2p-k+1) (2p-k+2) ... (2p))
//
// Numerator and denominator are formed as exact integers and divided once.
inline std::vector<double> matern_polynomial(int p) {
  __extension__ typedef unsigned __int128 Wide;
  std::vector<double> w(static_cast<std::size_t>(p) + 1);
  Wide binom = 1;  // C(p, k)
  Wide falling = 1;  // (2p-k+1) ... (2p)
  for (int k = 0; k <= p; ++k) {
    if (k > 0) {
      binom = binom * static_cast<Wide>(p - k + 1) / static_cast<Wide>(k);
      falling *= static_cast<Wide>(2 * p - k + 1);
    }
    const long double num =
        static_cast<long double>(binom) * std::ldexp(1.0L, k);
    w[static_cast<std::size_t>(k)] =
        static_cast<double>(num / static_cast<long double>(falling));
  }
  return w;
}

inline double unit_matern(int p, double x) {
  const auto w = matern_polynomial(p);
  double acc = 0.0;
  for (int k = p; k >= 0; --k) acc = acc * x + w[static_cast<std::size_t>(k)];
  return acc * std::exp(-x);
}

}  // namespace detail

inline double eval_kernel(const HidaMaternSpec& spec, double tau) {
  validate(spec);
  detail::check_lag(tau);
  return spec.sigma2 * std::cos(spec.b * tau) *
         detail::unit_matern(spec.p, spec.a * tau);
}

// k_z(tau) = sigma2 e^{jb tau} m_p(a tau); Re k_z = eval_kernel.
inline Complex complex_kernel(const HidaMaternSpec& spec, double tau) {
  validate(spec);
  detail::check_lag(tau);
  return spec.sigma2 * std::polar(1.0, spec.b * tau) *
         detail::unit_matern(spec.p, spec.a * tau);
}

// Two-lobe rational PSD normalised so that (1/2pi) * int S = sigma2.
inline double eval_psd(const HidaMaternSpec& spec, double omega) {
  validate(spec);
  if (!std::isfinite(omega)) {
    throw std::invalid_argument("eval_psd: omega must be finite");
  }
  const int p = spec.p;
  const double a = spec.a;
  // int dw / (w^2 + a^2)^{p+1} = pi (2p)! / (4^p (p!)^2 a^{2p+1});
  // (2p)! / (4^p (p!)^2) = prod_{i=1}^p (2i-1)/(2i).
  double ratio = 1.0;
  for (int i = 1; i <= p; ++i) ratio *= (2.0 * i - 1.0) / (2.0 * i);
  const double scale = spec.sigma2 * std::pow(a, 2 * p + 1) / ratio;
  const double lo = a * a + (omega - spec.b) * (omega - spec.b);
  const double hi = a * a + (omega + spec.b) * (omega + spec.b);
  return scale * (std::pow(1.0 / lo, p + 1) + std::pow(1.0 / hi, p + 1));
}

// One term P(tau) exp(-rate * tau) of an exponential-polynomial form.
struct ExpPolyMode {
  Complex rate;
  std::vector<Complex> coeffs;  // coeffs[k] multiplies tau^k
};

/// Closed form Re{ sum_m P_m(tau) exp(-mu_m tau) } for tau >= 0.
///
/// The form is one-sided, so derivatives at the origin are right limits.
/// The same object also exposes the un-projected complex value, which for a
/// single Hida-Matern mode is the complex kernel k_z.
class ExpPolyForm {
 public:
  ExpPolyForm() = default;
  explicit ExpPolyForm(std::vector<ExpPolyMode> modes) : modes_(std::move(modes)) {
    for (const auto& m : modes_) {
      if (!(m.rate.real() > 0.0)) {
        throw std::invalid_argument("ExpPolyForm: mode rate must have Re > 0");
      }
    }
  }

  const std::vector<ExpPolyMode>& modes() const { return modes_; }

  int degree() const {
    int d = 0;
    for (const auto& m : modes_) {
      d = std::max(d, static_cast<int>(m.coeffs.size()) - 1);
    }
    return d;
  }

  Complex complex_value(double tau) const {
    Complex total{0.0, 0.0};
    for (const auto& m : modes_) {
      Complex acc{0.0, 0.0};
      for (auto it = m.coeffs.rbegin(); it != m.coeffs.rend(); ++it) {
        acc = acc * tau + *it;
      }
      total += acc * std::exp(-m.rate * tau);
    }
    return total;
  }

  double value(double tau) const { return complex_value(tau).real(); }

  // d/dtau [Q e^{-mu tau}] = (Q' - mu Q) e^{-mu tau}
  ExpPolyForm derivative() const {
    std::vector<ExpPolyMode> out;
    out.reserve(modes_.size());
    for (const auto& m : modes_) {
      ExpPolyMode d{m.rate, std::vector<Complex>(m.coeffs.size())};
      for (std::size_t k = 0; k < m.coeffs.size(); ++k) {
        d.coeffs[k] = -m.rate * m.coeffs[k];
        if (k + 1 < m.coeffs.size()) {
          d.coeffs[k] += static_cast<double>(k + 1) * m.coeffs[k + 1];
        }
      }
      out.push_back(std::move(d));
    }
    ExpPolyForm f;
    f.modes_ = std::move(out);
    return f;
  }

  ExpPolyForm scaled(Complex factor) const {
    ExpPolyForm f = *this;
    for (auto& m : f.modes_) {
      for (auto& c : m.coeffs) c *= factor;
    }
    return f;
  }

 private:
  std::vector<ExpPolyMode> modes_;
};

inline ExpPolyForm to_exp_poly(const HidaMaternSpec& spec) {
  validate(spec);
  const auto w = detail::matern_polynomial(spec.p);
  ExpPolyMode mode{Complex{spec.a, -spec.b}, {}};
  mode.coeffs.reserve(w.size());
  double apow = 1.0;
  for (double wk : w) {
    mode.coeffs.emplace_back(spec.sigma2 * wk * apow, 0.0);
    apow *= spec.a;
  }
  return ExpPolyForm({std::move(mode)});
}

inline ExpPolyForm differentiate(const ExpPolyForm& form, int n) {
  if (n < 0) throw std::invalid_argument("differentiate: order must be >= 0");
  ExpPolyForm out = form;
  for (int i = 0; i < n; ++i) out = out.derivative();
  return out;
}

// -- mixtures ---------------------------------------------------------------

struct MixtureComponent {
  double weight = 1.0;
  HidaMaternSpec spec;

  bool operator==(const MixtureComponent&) const = default;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;

  /// Total Markov order: sum of (p_i + 1) over components.
  int order() const {
    int n = 0;
    for (const auto& c : components) n += c.spec.p + 1;
    return n;
  }

  bool operator==(const MixtureSpec&) const = default;
};

inline void validate(const MixtureSpec& mix) {
  if (mix.components.empty()) {
    throw std::invalid_argument("MixtureSpec: empty mixture");
  }
  bool any_positive = false;
  for (const auto& c : mix.components) {
    validate(c.spec);
    if (!std::isfinite(c.weight) || c.weight < 0.0) {
      throw std::invalid_argument("MixtureSpec: weights must be finite and >= 0");
    }
    any_positive = any_positive || c.weight > 0.0;
  }
  if (!any_positive) {
    throw std::invalid_argument("MixtureSpec: at least one weight must be > 0");
  }
}

inline double mixture_eval(const MixtureSpec& mix, double tau) {
  validate(mix);
  double total = 0.0;
  for (const auto& c : mix.components) total += c.weight * eval_kernel(c.spec, tau);
  return total;
}

inline double mixture_psd(const MixtureSpec& mix, double omega) {
  validate(mix);
  double total = 0.0;
  for (const auto& c : mix.components) total += c.weight * eval_psd(c.spec, omega);
  return total;
}

inline double mixture_variance(const MixtureSpec& mix) {
  validate(mix);
  double total = 0.0;
  for (const auto& c : mix.components) total += c.weight * c.spec.sigma2;
  return total;
}

inline ExpPolyForm to_exp_poly(const MixtureSpec& mix) {
  validate(mix);
  std::vector<ExpPolyMode> modes;
  for (const auto& c : mix.components) {
    if (c.weight == 0.0) continue;
    auto form = to_exp_poly(c.spec).scaled(c.weight);
    for (const auto& m : form.modes()) modes.push_back(m);
  }
  return ExpPolyForm(std::move(modes));
}

// Truncated cosine-power expansion of the periodic kernel
//   sigma2 exp(-2 sin^2(omega0 tau / 2) / l^2)
//     = sigma2 e^{-1/l^2} sum_q (l^-2)^q / q! cos^q(omega0 tau),
// with cos^q expanded binomially into frequencies omega0 |q - 2v|.  The
// limit a -> 0 is replaced by the floor a_min (default 1e-4 omega0).
struct PeriodicExpansionOptions {
  double a_min = -1.0;  // <= 0 selects 1e-4 * omega0
  int order = 1;
};

inline MixtureSpec periodic_to_mixture(double sigma2, double l, double omega0,
                                       int truncation,
                                       PeriodicExpansionOptions opts = {}) {
  if (!(sigma2 > 0.0) || !(l > 0.0) || !(omega0 > 0.0)) {
    throw std::invalid_argument("periodic_to_mixture: parameters must be positive");
  }
  if (truncation < 0) {
    throw std::invalid_argument("periodic_to_mixture: truncation must be >= 0");
  }
  const double a = opts.a_min > 0.0 ? opts.a_min : 1e-4 * omega0;
  const double inv_l2 = 1.0 / (l * l);
  std::map<int, double> by_harmonic;
  double qfact = 1.0;
  for (int q = 0; q <= truncation; ++q) {
    if (q > 0) qfact *= q;
    const double head = std::pow(inv_l2, q) / qfact / std::ldexp(1.0, q);
    double binom = 1.0;
    for (int v = 0; v <= q; ++v) {
      if (v > 0) binom = binom * (q - v + 1) / v;
      by_harmonic[std::abs(q - 2 * v)] += head * binom;
    }
  }
  MixtureSpec mix;
  const double front = sigma2 * std::exp(-inv_l2);
  for (const auto& [harmonic, w] : by_harmonic) {
    mix.components.push_back(
        {front * w, HidaMaternSpec{1.0, a, omega0 * harmonic, opts.order}});
  }
  return mix;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_KERNEL_HPP
