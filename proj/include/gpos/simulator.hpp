#ifndef GPOS_SIMULATOR_HPP
#define GPOS_SIMULATOR_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "gpos/common.hpp"
#include "gpos/weather.hpp"

namespace gpos {

/// Uniform angular-frequency grid omega_k = k * d_omega, k = 1..n_bins.
struct FrequencyGrid {
  double d_omega = 0.0;
  std::size_t n_bins = 0;

  double omega(std::size_t k) const { return static_cast<double>(k) * d_omega; }
  double top() const { return omega(n_bins); }
};

/// Spectral density on a frequency grid. Used for both wave elevation
/// spectra [m^2 s/rad] and response spectra [(N m)^2 s/rad].
struct Spectrum {
  std::vector<double> omega;
  std::vector<double> density;
};
using WaveSpectrum = Spectrum;
using ResponseSpectrum = Spectrum;

/// Trapezoid-rule integral of the density over its grid.
inline double spectral_moment0(const Spectrum& s) {
  double acc = 0.0;
  for (std::size_t i = 1; i < s.omega.size(); ++i)
    acc += 0.5 * (s.density[i] + s.density[i - 1]) * (s.omega[i] - s.omega[i - 1]);
  return acc;
}

/// Single-degree-of-freedom resonant response amplitude operator.
struct TransferFunction {
  double omega0 = 0.7;  ///< natural frequency [rad/s]
  double zeta = 0.12;   ///< damping ratio
  double gain = 3.8e4;  ///< response per metre of wave amplitude [N m / m]

  void validate() const {
    if (!(omega0 > 0.0)) throw ConfigError("transfer function: omega0 must be > 0");
    if (!(zeta > 0.0 && zeta < 1.0)) throw ConfigError("transfer function: zeta must be in (0, 1)");
    if (!(gain > 0.0)) throw ConfigError("transfer function: gain must be > 0");
  }

  /// |H(omega)|^2
  double gain_squared(double omega) const {
    const double w02 = omega0 * omega0;
    const double a = w02 - omega * omega;
    const double b = 2.0 * zeta * omega0 * omega;
    return gain * gain * w02 * w02 / (a * a + b * b);
  }
};

/// Quasi-static wind thrust: cubic below rated speed, flat to cut-out, zero above.
struct ThrustCurve {
  double rated_speed = 12.0;   ///< [m/s]
  double cutout_speed = 25.0;  ///< [m/s]
  double rated_force = 1.5e3;  ///< [N]

  void validate() const {
    if (!(rated_speed > 0.0 && rated_speed < cutout_speed))
      throw ConfigError("thrust curve: need 0 < rated_speed < cutout_speed");
    if (!(rated_force > 0.0)) throw ConfigError("thrust curve: rated_force must be > 0");
  }
};

struct SimConfig {
  double duration = 3600.0;  ///< [s]
  double dt = 0.5;           ///< [s]
  TransferFunction transfer{};
  ThrustCurve thrust{};
  double lever_arm = 20.0;   ///< [m]

  std::size_t n_samples() const {
    return static_cast<std::size_t>(std::llround(duration / dt));
  }

  /// Transform length: next power of two at or above the sample count.
  std::size_t fft_size() const {
    std::size_t n = 1;
    while (n < n_samples()) n <<= 1;
    return n;
  }

  /// Grid matched to the transform bins, DC and Nyquist excluded.
  FrequencyGrid grid() const {
    const std::size_t n = fft_size();
    return {2.0 * std::numbers::pi / (static_cast<double>(n) * dt), n / 2 - 1};
  }

  void validate() const {
    if (!(dt > 0.0) || !(duration > 0.0) || !std::isfinite(dt) || !std::isfinite(duration))
      throw ConfigError("sim config: dt and duration must be positive");
    if (n_samples() < 1024)
      throw ConfigError("sim config: duration/dt must give at least 1024 samples");
    if (!(lever_arm >= 0.0)) throw ConfigError("sim config: lever_arm must be >= 0");
    transfer.validate();
    thrust.validate();
  }
};

/// Peak responses from one simulated (or surrogate-generated) hour.
struct SimOutput {
  std::vector<double> peaks;

  std::size_t count() const { return peaks.size(); }
  bool operator==(const SimOutput&) const = default;
};

// ---------------------------------------------------------------------------

inline constexpr double kJonswapGamma = 3.3;

/// JONSWAP-form wave spectrum, rescaled so that its trapezoid integral over
/// the grid equals hs^2 / 16.
inline WaveSpectrum wave_spectrum(double hs, double tp, const FrequencyGrid& grid) {
  if (!(hs >= 0.0) || !std::isfinite(hs)) throw UsageError("wave_spectrum: hs must be >= 0");
  if (!(tp > 0.0) || !std::isfinite(tp)) throw UsageError("wave_spectrum: tp must be > 0");
  if (grid.n_bins < 2 || !(grid.d_omega > 0.0))
    throw ConfigError("wave_spectrum: empty frequency grid");
  const double wp = 2.0 * std::numbers::pi / tp;
  if (wp >= grid.top() || wp <= grid.omega(1))
    throw ConfigError("wave_spectrum: peak frequency outside the resolvable grid");

  WaveSpectrum s;
  s.omega.resize(grid.n_bins);
  s.density.assign(grid.n_bins, 0.0);
  for (std::size_t k = 0; k < grid.n_bins; ++k) s.omega[k] = grid.omega(k + 1);
  if (hs == 0.0) return s;

  for (std::size_t k = 0; k < grid.n_bins; ++k) {
    const double w = s.omega[k];
    const double sigma = w <= wp ? 0.07 : 0.09;
    const double x = (w - wp) / (sigma * wp);
    const double ratio = wp / w;
    const double r4 = ratio * ratio * ratio * ratio;
    const double shape = std::exp(-1.25 * r4) / (w * w * w * w * w);
    s.density[k] = shape * std::pow(kJonswapGamma, std::exp(-0.5 * x * x));
  }
  const double m0 = spectral_moment0(s);
  const double scale = hs * hs / 16.0 / m0;
  for (double& d : s.density) d *= scale;
  return s;
}

/// S_R(omega) = |H(omega)|^2 S(omega).
inline ResponseSpectrum response_spectrum(const WaveSpectrum& wave, const TransferFunction& tf) {
  tf.validate();
  ResponseSpectrum r{wave.omega, std::vector<double>(wave.density.size())};
  for (std::size_t k = 0; k < wave.omega.size(); ++k)
    r.density[k] = tf.gain_squared(wave.omega[k]) * wave.density[k];
  return r;
}

/// Random-phase realization: each bin contributes sqrt(2 S dw) cos(w t + phi)
/// with an independent uniform phase; summed by an inverse real FFT.
inline std::vector<double> realize_time_series(const ResponseSpectrum& resp, double dt,
                                               double duration, std::uint64_t seed) {
  const auto n_out = static_cast<std::size_t>(std::llround(duration / dt));
  if (!(dt > 0.0) || n_out < 1024)
    throw ConfigError("realize_time_series: duration/dt must give at least 1024 samples");
  std::size_t nfft = 1;
  while (nfft < n_out) nfft <<= 1;
  const double dw = 2.0 * std::numbers::pi / (static_cast<double>(nfft) * dt);
  const std::size_t n_bins = resp.omega.size();
  if (n_bins > nfft / 2 - 1)
    throw ConfigError("realize_time_series: frequency grid extends past Nyquist");
  for (std::size_t k = 0; k < n_bins; ++k)
    if (std::abs(resp.omega[k] - static_cast<double>(k + 1) * dw) > 1e-9 * dw * static_cast<double>(k + 1))
      throw ConfigError("realize_time_series: frequency grid does not match transform bins");

  // Half spectrum X[0..nfft/2]; unscaled inverse gives x_n = sum_k 2 Re(X_k e^{i w_k t_n}).
  std::vector<std::complex<double>> half(nfft / 2 + 1, {0.0, 0.0});
  Rng rng(seed);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double amp = std::sqrt(2.0 * resp.density[k] * dw);
    half[k + 1] = std::polar(0.5 * amp, phase);
  }

  thread_local Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<double> full(nfft);
  fft.inv(full.data(), half.data(), static_cast<Eigen::Index>(nfft));
  full.resize(n_out);
  return full;
}

/// Wind-induced overturning moment [N m].
inline double wind_moment(double vw, const ThrustCurve& thrust, double lever_arm) {
  if (!(vw >= 0.0)) throw UsageError("wind_moment: vw must be >= 0");
  double force = 0.0;
  if (vw < thrust.rated_speed) {
    const double r = vw / thrust.rated_speed;
    force = thrust.rated_force * r * r * r;
  } else if (vw <= thrust.cutout_speed) {
    force = thrust.rated_force;
  }
  return force * lever_arm;
}

/// Maximum of the series within each up-crossing interval. An up-crossing at
/// i means series[i] <= threshold < series[i+1]; the segment after the final
/// up-crossing contributes its maximum as well.
inline SimOutput extract_peaks(std::span<const double> series, double threshold) {
  if (series.size() < 2) throw UsageError("extract_peaks: series needs at least 2 samples");
  SimOutput out;
  bool open = false;
  double running = 0.0;
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    const bool up = series[i] <= threshold && series[i + 1] > threshold;
    if (up) {
      if (open) out.peaks.push_back(running);
      open = true;
      running = series[i + 1];
    } else if (open) {
      running = std::max(running, series[i + 1]);
    }
  }
  if (open) out.peaks.push_back(running);
  return out;
}

/// Stochastic black box: one weather hour -> array of peak responses.
inline SimOutput simulate(const WeatherRecord& record, const SimConfig& cfg, std::uint64_t seed) {
  if (!is_physical(record)) throw DataError("simulate: weather record out of physical range");
  cfg.validate();
  const auto wave = wave_spectrum(record.hs, record.tp, cfg.grid());
  const auto resp = response_spectrum(wave, cfg.transfer);
  auto series = realize_time_series(resp, cfg.dt, cfg.duration, seed);
  const double offset = wind_moment(record.vw, cfg.thrust, cfg.lever_arm);
  double sum = 0.0;
  for (double& v : series) {
    v += offset;
    sum += v;
  }
  const double threshold = sum / static_cast<double>(series.size());
  return extract_peaks(series, threshold);
}

}  // namespace gpos

#endif
