// Synthetic data generators: the two-component spectral-mixture toy series
// and a trend-plus-seasonal series shaped like monthly CO2 records.

#ifndef HIDAMATERN_SYNTHETIC_HPP
#define HIDAMATERN_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "hidamatern/kalman.hpp"
#include "hidamatern/kernel.hpp"
#include "hidamatern/reference_kernels.hpp"

namespace hidamatern {

inline constexpr double kToySpacing = 0.05;

inline SpectralMixture toy_spectral_mixture() {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return SpectralMixture{{{1.5 * 1.5, 2.0, two_pi * 0.01}, {1.5 * 1.5, 2.0, two_pi * 0.05}}};
}

/// Hida-Matern p=2 mixture matched to the toy spectral mixture: same
/// variance and frequency per term, decay rate matching the curvature at 0.
inline MixtureSpec toy_hida_matern_prior() {
  MixtureSpec mix;
  for (const auto& t : toy_spectral_mixture().terms) {
    mix.components.push_back({1.0, HidaMaternSpec{t.sigma2, std::sqrt(3.0) / t.l, t.omega, 2}});
  }
  return mix;
}

/// Random-phase cosine features approximating a draw from a spectral-mixture
/// prior; usable at sizes where a dense draw is not.
class SpectralSampler {
 public:
  SpectralSampler(const SpectralMixture& sm, std::size_t features, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (const auto& t : sm.terms) {
      std::normal_distribution<double> freq(t.omega, 1.0 / t.l);
      const double amp = std::sqrt(2.0 * t.sigma2 / static_cast<double>(features));
      for (std::size_t f = 0; f < features; ++f) {
        omega_.push_back(freq(rng));
        phase_.push_back(phase(rng));
        amp_.push_back(amp);
      }
    }
  }

  double operator()(double t) const {
    double v = 0.0;
    for (std::size_t i = 0; i < omega_.size(); ++i) v += amp_[i] * std::cos(omega_[i] * t + phase_[i]);
    return v;
  }

 private:
  std::vector<double> omega_, phase_, amp_;
};

struct ToyData {
  Dataset data;
  std::vector<double> latent;
};

/// M points with spacing 0.05 from the toy prior plus N(0, noise) errors.
inline ToyData toy_dataset(std::size_t m, double noise, std::uint64_t seed,
                           std::size_t features = 2000) {
  const SpectralSampler f(toy_spectral_mixture(), features, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> eps(0.0, std::sqrt(noise));
  ToyData out;
  std::vector<double> t(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    t[i] = kToySpacing * static_cast<double>(i);
    out.latent.push_back(f(t[i]));
    y[i] = out.latent.back() + eps(rng);
  }
  out.data = make_dataset(t, y);
  return out;
}

/// Two order-3 components: a seasonal one (c = 0.05^2, a = 1/25, b = 2 pi)
/// and a slow trend (c = 2.3^2, a = 1/100, b = 0).
inline MixtureSpec co2_prior() {
  return MixtureSpec{{{0.05 * 0.05, HidaMaternSpec{1.0, 1.0 / 25.0, 2.0 * std::numbers::pi, 3}},
                      {2.3 * 2.3, HidaMaternSpec{1.0, 1.0 / 100.0, 0.0, 3}}}};
}

struct SeasonalSeries {
  std::vector<double> times;     // decimal years, monthly
  std::vector<double> values;    // trend + seasonal + noise
  std::vector<double> trend;
  std::vector<double> seasonal;
};

/// Monthly series from `start` to `stop` (decimal years): quadratic trend
/// in ppm-like units, annual cycle with a weak second harmonic, white noise.
inline SeasonalSeries co2_like_series(double start, double stop, double noise_sd,
                                      std::uint64_t seed) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise_sd);
  SeasonalSeries s;
  for (int k = 0;; ++k) {
    const double t = start + (k + 0.5) / 12.0;
    if (t > stop) break;
    const double u = t - start;
    const double trend = 330.0 + 1.3 * u + 0.012 * u * u;
    const double season = 2.8 * std::sin(two_pi * t + 0.4) + 0.7 * std::sin(2.0 * two_pi * t - 1.1);
    s.times.push_back(t);
    s.trend.push_back(trend);
    s.seasonal.push_back(season);
    s.values.push_back(trend + season + eps(rng));
  }
  return s;
}

}  // namespace hidamatern

#endif  // HIDAMATERN_SYNTHETIC_HPP
