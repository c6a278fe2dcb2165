#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/circular.hpp"
#include "opse/math.hpp"
#include "opse/rational.hpp"
#include "opse/speaker_field.hpp"

namespace opse {

struct DegenerateWindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NearNullDirectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AverageKind { response, power };
enum class QuotientMode { deterministic, wls, power };

/// Spatial windowed average of the directivity over a circular window:
/// response kind integrates S_A f, power kind integrates |S_A|^2 f.
inline Complex windowed_average(const DirectivityModel& dir, const CircularDistribution& window,
                                double nu, AverageKind kind) {
  const auto integrand = [&](double theta) -> Complex {
    const Complex s = dir.sample(nu, theta);
    const double f = pdf(window, theta);
    if (kind == AverageKind::power) return Complex(std::norm(s) * f, 0.0);
    return s * f;
  };
  return integrate_peaked(integrand, window.mu, window.ell, 1e-11);
}

inline double windowed_power(const DirectivityModel& dir, const CircularDistribution& window,
                             double nu) {
  return windowed_average(dir, window, nu, AverageKind::power).real();
}

/// Q_n(nu) = S_A(nu, 0) / S_A(nu, theta_n): normalizes the listener-direction
/// response to the on-axis response.
inline Complex quotient_deterministic(const DirectivityModel& dir, double theta_n, double nu) {
  const Complex axial = dir.sample(nu, 0.0);
  const Complex at = dir.sample(nu, theta_n);
  if (std::abs(at) < 1e-9 * std::abs(axial))
    throw NearNullDirectionError("quotient_deterministic: near-null listener direction at " +
                                 std::to_string(nu) + " Hz");
  return axial / at;
}

/// Weighted least-squares quotient: compensates amplitude and phase of the
/// window-averaged responses.
inline Complex quotient_wls(const DirectivityModel& dir, const CircularDistribution& axial_window,
                            const CircularDistribution& listener_window, double nu) {
  const Complex avg_axial = windowed_average(dir, axial_window, nu, AverageKind::response);
  const Complex avg_listener = windowed_average(dir, listener_window, nu, AverageKind::response);
  const double pow_listener = windowed_power(dir, listener_window, nu);
  if (!(pow_listener > 1e-18))
    throw DegenerateWindowError("quotient_wls: zero windowed power");
  return avg_axial * std::conj(avg_listener) / pow_listener;
}

inline constexpr double kPowerQuotientFwhmFloorDeg = 45.0;

/// Zero-phase power quotient sqrt(P_axial / P_listener). The listener window
/// dispersion is clamped to FWHM >= 45 degrees so the correction never
/// equalizes to a single direct path.
inline double quotient_power(const DirectivityModel& dir, const CircularDistribution& axial_window,
                             const CircularDistribution& listener_window, double nu) {
  const double floor_ell = fwhm_to_ell(deg_to_rad(kPowerQuotientFwhmFloorDeg));
  CircularDistribution win(listener_window.mu, std::max(listener_window.ell, floor_ell));
  const double p0 = windowed_power(dir, axial_window, nu);
  const double pn = windowed_power(dir, win, nu);
  if (!(p0 > 1e-18) || !(pn > 1e-18))
    throw DegenerateWindowError("quotient_power: zero windowed power");
  return std::sqrt(p0 / pn);
}

/// Room acoustic attenuation model around the critical distance d_c where
/// direct and indirect path powers are equal.
struct DistanceModel {
  double critical_distance;  ///< d_c, meters
  double gamma_db_dd;        ///< decay, dB per double-distance, in [-6, 0]
  double reference_distance; ///< D, meters

  DistanceModel(double dc, double gamma, double D)
      : critical_distance(dc), gamma_db_dd(gamma), reference_distance(D) {
    if (!(dc > 0.0)) throw std::invalid_argument("DistanceModel: d_c must be positive");
    if (!(gamma >= -6.0 && gamma <= 0.0))
      throw std::invalid_argument("DistanceModel: gamma outside [-6, 0] dB/dd");
    if (!(D > 0.0)) throw std::invalid_argument("DistanceModel: reference distance must be positive");
  }

  double beta() const { return std::pow(10.0, gamma_db_dd / 10.0); }

  static DistanceModel anechoic(double D = 1.0) { return DistanceModel(1e9, 0.0, D); }
};

/// F(r, D, d_c) = sqrt(rho(D)/rho(r)): gain that matches the in-room power
/// at distance r to the power at the reference distance D.
inline double distance_gain(const DistanceModel& model, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("distance_gain: distance must be positive");
  const double b = model.beta();
  const double dc2b = std::pow(model.critical_distance, 2.0 * b);
  const double D2b = std::pow(model.reference_distance, 2.0 * b);
  const double r2b = std::pow(r, 2.0 * b);
  return r / model.reference_distance * std::sqrt((dc2b + D2b) / (dc2b + r2b));
}

/// Assembled normalization filter for one loudspeaker:
/// G_n(nu) = M_n A_stable (A_unstable / A_lcm) F(||u_n||) e^{j kappa (||u_n|| - d)}
struct SpeakerFilter {
  FilterFactorization factorization;
  double fitted_delay_sec = 0.0;  ///< residual linear phase removed before the fit
  double distance_gain_value = 1.0;
  double distance = 0.0;       ///< ||u_n||
  double common_distance = 0.0;  ///< d = max_n ||u_n||
  double speed_of_sound = 343.0;
  const AllPassFactorSet* lcm = nullptr;  // owned by NormalizationResult
  double fit_relative_error = 0.0;

  Complex response(double nu) const {
    const double fs = factorization.min_phase.sample_rate;
    const Complex w = std::polar(1.0, -two_pi * nu / fs);
    Complex h = factorization.min_phase.response(nu) * factorization.stable_allpass.response(nu) *
                factorization.unstable_allpass.response_at_w(w);
    if (lcm && !lcm->empty()) h /= lcm->response_at_w(w);
    h *= distance_gain_value;
    const double kappa = two_pi * nu / speed_of_sound;
    h *= std::polar(1.0, kappa * (distance - common_distance));
    h *= std::polar(1.0, -two_pi * nu * fitted_delay_sec);
    return h;
  }
};

struct NormalizationResult {
  std::vector<SpeakerFilter> filters;
  double common_distance = 0.0;
  AllPassFactorSet lcm;
  std::vector<double> grid;
  std::vector<std::vector<double>> headroom;  ///< tau_n(nu) = 1/|G_n(nu)|, [speaker][freq]

  NormalizationResult(const NormalizationResult&) = delete;
  NormalizationResult& operator=(const NormalizationResult&) = delete;
  NormalizationResult(NormalizationResult&& o) noexcept { move_from(std::move(o)); }
  NormalizationResult& operator=(NormalizationResult&& o) noexcept {
    move_from(std::move(o));
    return *this;
  }
  NormalizationResult() = default;

 private:
  void move_from(NormalizationResult&& o) {
    filters = std::move(o.filters);
    common_distance = o.common_distance;
    lcm = std::move(o.lcm);
    grid = std::move(o.grid);
    headroom = std::move(o.headroom);
    for (auto& f : filters) f.lcm = &lcm;  // re-point into this object
  }
};

struct NormalizationOptions {
  QuotientMode mode = QuotientMode::power;  // the worked example uses power averages
  int fit_zeros = 8;
  int fit_poles = 8;
  double sample_rate = 48000.0;
  double axial_fwhm_deg = 60.0;  // f_0 window
  double speed_of_sound = 343.0;
};

namespace detail {

/// Average group delay over the top octave of the grid, in seconds.
inline double estimate_delay(const std::vector<double>& grid, const std::vector<Complex>& samples) {
  const double top = grid.back();
  double num = 0.0;
  int count = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (grid[i] < top / 2.0) continue;
    const double dphi = std::arg(samples[i + 1] / samples[i]);
    num += -dphi / (two_pi * (grid[i + 1] - grid[i]));
    ++count;
  }
  return count > 0 ? num / count : 0.0;
}

}  // namespace detail

/// Build per-speaker normalization filters over a frequency grid: quotient
/// targets, rational approximation, minimum-phase/all-pass split, LCM
/// all-pass across speakers, distance compensation and delay alignment.
inline NormalizationResult build_normalization(
    const Layout& layout, const DirectivityModel& dir,
    const std::vector<CircularDistribution>& listener_windows, const DistanceModel& model,
    const std::vector<double>& grid, const NormalizationOptions& opt = {}) {
  if (layout.size() != listener_windows.size())
    throw std::invalid_argument("build_normalization: one listener window per speaker required");
  if (grid.size() < 4) throw std::invalid_argument("build_normalization: grid too small");

  const CircularDistribution axial(0.0, fwhm_to_ell(deg_to_rad(opt.axial_fwhm_deg)));

  NormalizationResult out;
  out.grid = grid;
  double d = 0.0;
  for (const auto& s : layout.speakers) d = std::max(d, s.distance());
  out.common_distance = d;

  std::vector<AllPassFactorSet> unstable_sets;
  for (std::size_t n = 0; n < layout.size(); ++n) {
    const auto& spk = layout.speakers[n];
    std::vector<Complex> q(grid.size());
    try {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        switch (opt.mode) {
          case QuotientMode::deterministic: {
            const double theta = normalization_angle(spk, Vec2::Zero());
            q[i] = quotient_deterministic(dir, theta, grid[i]);
            break;
          }
          case QuotientMode::wls:
            q[i] = quotient_wls(dir, axial, listener_windows[n], grid[i]);
            break;
          case QuotientMode::power:
            q[i] = Complex(quotient_power(dir, axial, listener_windows[n], grid[i]), 0.0);
            break;
        }
      }

      SpeakerFilter sf;
      sf.fitted_delay_sec = detail::estimate_delay(grid, q);
      std::vector<Complex> q_aligned(q.size());
      for (std::size_t i = 0; i < grid.size(); ++i)
        q_aligned[i] = q[i] * std::polar(1.0, two_pi * grid[i] * sf.fitted_delay_sec);

      auto fit = fit_rational(grid, q_aligned, opt.fit_zeros, opt.fit_poles, opt.sample_rate);
      sf.fit_relative_error = fit.relative_error;
      sf.factorization = factorize(fit.filter);
      sf.distance = spk.distance();
      sf.common_distance = d;
      sf.distance_gain_value = distance_gain(model, spk.distance());
      sf.speed_of_sound = opt.speed_of_sound;
      unstable_sets.push_back(sf.factorization.unstable_allpass);
      out.filters.push_back(std::move(sf));
    } catch (const std::exception& e) {
      throw FitError("build_normalization: speaker " + std::to_string(n) + ": " + e.what());
    }
  }

  out.lcm = lcm_allpass(unstable_sets);
  for (auto& f : out.filters) f.lcm = &out.lcm;

  out.headroom.resize(layout.size());
  for (std::size_t n = 0; n < layout.size(); ++n) {
    out.headroom[n].resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double mag = std::abs(out.filters[n].response(grid[i]));
      if (!(mag > 0.0) || !std::isfinite(mag))
        throw FitError("build_normalization: non-finite filter magnitude for speaker " +
                       std::to_string(n));
      out.headroom[n][i] = 1.0 / mag;
    }
  }
  return out;
}

}  // namespace opse
