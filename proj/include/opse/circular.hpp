#pragma once

#include <cmath>
#include <stdexcept>

#include "opse/math.hpp"

namespace opse {

/// Squared-exponential chordal circular distribution.
///
/// f(theta) = exp((cos(theta - mu) - 1)/ell^2) / (2 pi e^{-1/ell^2} I0(1/ell^2))
///
/// Large ell tends to the uniform density 1/(2 pi); small ell concentrates
/// toward a Dirac at mu. Related to the von Mises family with concentration
/// kappa = 1/ell^2.
struct CircularDistribution {
  double mu;   ///< mean azimuth, wrapped to (-pi, pi]
  double ell;  ///< dispersion, > 0

  CircularDistribution(double mean, double dispersion)
      : mu(wrap_angle(mean)), ell(dispersion) {
    if (!(std::isfinite(dispersion) && dispersion > 0.0))
      throw std::invalid_argument("CircularDistribution: dispersion must be positive");
  }
};

/// A reported normalization-angle point estimate with its dispersion. The
/// mapping from a session's confidence interval to the dispersion is the
/// caller's choice.
struct AngleMeasurement {
  double theta;
  double ell;

  AngleMeasurement(double angle, double dispersion)
      : theta(wrap_angle(angle)), ell(dispersion) {
    if (!(std::isfinite(dispersion) && dispersion > 0.0))
      throw std::invalid_argument("AngleMeasurement: dispersion must be positive");
  }
};

inline double pdf(const CircularDistribution& d, double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("pdf: non-finite angle");
  const double x = 1.0 / (d.ell * d.ell);
  const double delta = theta - d.mu;
  // exp((cos(delta) - 1) * x) computed against the scaled normalizer so both
  // factors stay finite for any dispersion.
  return std::exp((std::cos(delta) - 1.0) * x) / (two_pi * bessel_i0e(x));
}

/// Dispersion from the full width at half maximum of the pdf peak.
/// fwhm in (0, 2 pi]; the upper limit maps to sqrt(2/ln 2).
inline double fwhm_to_ell(double fwhm) {
  if (!(std::isfinite(fwhm) && fwhm > 0.0 && fwhm <= two_pi))
    throw std::invalid_argument("fwhm_to_ell: fwhm must lie in (0, 2*pi]");
  return 2.0 * std::sin(fwhm / 4.0) / std::sqrt(2.0 * std::log(2.0));
}

inline double ell_to_fwhm(double ell) {
  const double s = ell * std::sqrt(2.0 * std::log(2.0)) / 2.0;
  if (!(std::isfinite(ell) && ell > 0.0 && s <= 1.0))
    throw std::invalid_argument("ell_to_fwhm: dispersion outside FWHM range");
  return 4.0 * std::asin(s);
}

inline CircularDistribution from_fwhm(double mean, double fwhm) {
  return CircularDistribution(mean, fwhm_to_ell(fwhm));
}

/// P(|theta - mu| <= a), a in [0, pi]. Power series over the cosine-integral
/// recursion; falls back to adaptive quadrature for high concentration where
/// the series converges slowly.
inline double interval_mass(const CircularDistribution& d, double a) {
  if (!(std::isfinite(a) && a >= 0.0 && a <= pi))
    throw std::invalid_argument("interval_mass: half-width must lie in [0, pi]");
  if (a == 0.0) return 0.0;
  const double x = 1.0 / (d.ell * d.ell);
  bool converged = false;
  double sum = 0.0;
  if (d.ell >= 0.05) {
    // integral of exp(x cos t) over [-a, a], scaled by e^{-x}:
    //   e^{-x} sum_n x^n C_n(a) / n!,  C_n = int_{-a}^{a} cos^n t dt
    // C_0 = 2a, C_1 = 2 sin a, C_n = 2 cos^{n-1}(a) sin(a)/n + (n-1)/n C_{n-2}
    const double ca = std::cos(a), sa = std::sin(a);
    double c_prev2 = 2.0 * a, c_prev1 = 2.0 * sa;
    double t = std::exp(-x);  // x^n e^{-x} / n! at n = 0
    sum = t * c_prev2;
    t *= x;
    sum += t * c_prev1;
    double cpow = ca;  // cos^{n-1}(a)
    for (int n = 2; n <= 200; ++n) {
      const double cn = 2.0 * cpow * sa / n + (n - 1.0) / n * c_prev2;
      cpow *= ca;
      c_prev2 = c_prev1;
      c_prev1 = cn;
      t *= x / n;
      const double term = t * cn;
      const double prev_term = t * n / x * c_prev2;  // magnitude of term n-1
      sum += term;
      // odd-power terms vanish at a = pi, so require two consecutive small terms
      if (n > 4 && std::fabs(term) < 1e-12 * std::fabs(sum) &&
          std::fabs(prev_term) < 1e-12 * std::fabs(sum)) {
        converged = true;
        break;
      }
    }
  }
  double mass;
  if (converged) {
    mass = sum / (two_pi * bessel_i0e(x));
  } else {
    CircularDistribution centered(0.0, d.ell);
    mass = integrate_peaked([&](double t) { return pdf(centered, t); }, 0.0, d.ell, 1e-12);
    if (a < pi) {
      // subtract the two tails |t| in (a, pi]
      const double tail = integrate_adaptive(
          [&](double t) { return pdf(centered, t); }, a, pi, 1e-13);
      mass -= 2.0 * tail;
    }
  }
  return std::clamp(mass, 0.0, 1.0);
}

/// Product of two circular distributions (conjugate closed form): the
/// exponents' weighted, phase-shifted cosines sum to a single cosine.
inline CircularDistribution product(const CircularDistribution& a, const CircularDistribution& b) {
  const double wa = 1.0 / (a.ell * a.ell), wb = 1.0 / (b.ell * b.ell);
  const double s = std::sin(a.mu) * wa + std::sin(b.mu) * wb;
  const double c = std::cos(a.mu) * wa + std::cos(b.mu) * wb;
  const double mu = std::atan2(s, c);
  const double la2 = a.ell * a.ell, lb2 = b.ell * b.ell;
  const double inner =
      la2 * la2 + 2.0 * std::cos(a.mu - b.mu) * la2 * lb2 + lb2 * lb2;
  // Antipodal means with equal weight cancel exactly; the product degenerates
  // to the uniform distribution, represented by a very large dispersion.
  const double ell2 = inner > 0.0 ? la2 * lb2 / std::sqrt(inner) : 1e300;
  return CircularDistribution(mu, std::min(std::sqrt(ell2), 1e150));
}

/// Conjugate Bayesian update: posterior = prior x likelihood. Unlike the
/// normal distribution, the posterior dispersion depends on the angular gap
/// between the prior mean and the measured angle.
inline CircularDistribution bayes_update(const CircularDistribution& prior,
                                         const AngleMeasurement& meas) {
  return product(prior, CircularDistribution(meas.theta, meas.ell));
}

}  // namespace opse
