#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace opse {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

/// Wrap an angle to (-pi, pi]; the tie at -pi maps to +pi.
inline double wrap_angle(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("wrap_angle: non-finite angle");
  double t = std::remainder(theta, two_pi);
  if (t <= -pi) t = pi;
  return t;
}

inline double deg_to_rad(double deg) { return deg * pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / pi; }

/// Exponentially scaled modified Bessel function, e^{-x} I_0(x), x >= 0.
/// Stays finite for arbitrarily large x (asymptotic expansion beyond 600).
inline double bessel_i0e(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("bessel_i0e: negative or NaN argument");
  if (x < 600.0) return std::exp(-x) * std::cyl_bessel_i(0.0, x);
  // e^{-x} I_0(x) ~ (2 pi x)^{-1/2} sum_k a_k / x^k
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 30; ++k) {
    const double m = 2.0 * k - 1.0;
    term *= m * m / (8.0 * k * x);
    const double prev = sum;
    sum += term;
    if (sum == prev) break;
  }
  return sum / std::sqrt(two_pi * x);
}

/// Bessel function of the first kind, orders 0 and 1, any real argument.
inline double bessel_j(int order, double x) {
  if (order != 0 && order != 1) throw std::invalid_argument("bessel_j: order must be 0 or 1");
  if (!std::isfinite(x)) throw std::invalid_argument("bessel_j: non-finite argument");
  const double ax = std::fabs(x);
  const double v = std::cyl_bessel_j(static_cast<double>(order), ax);
  // J0 is even, J1 is odd.
  return (order == 1 && x < 0.0) ? -v : v;
}

/// 2 J1(x)/x with the removable singularity filled in at x = 0.
inline double jinc(double x) {
  const double ax = std::fabs(x);
  if (ax < 1e-6) return 1.0 - x * x / 8.0;
  return 2.0 * bessel_j(1, ax) / ax;
}

namespace detail {

template <typename T>
double integ_norm(const T& v) {
  if constexpr (std::is_same_v<T, std::complex<double>>) return std::abs(v);
  else return std::fabs(v);
}

template <typename F, typename T>
T adaptive_simpson_rec(const F& f, double a, double b, T fa, T fm, T fb, T whole,
                       double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const T flm = f(lm), frm = f(rm);
  const double h6 = (b - a) / 12.0;
  const T left = h6 * (fa + 4.0 * flm + fm);
  const T right = h6 * (fm + 4.0 * frm + fb);
  const T delta = left + right - whole;
  if (depth <= 0 || integ_norm(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] with absolute tolerance.
template <typename F, typename T = std::invoke_result_t<F, double>>
T integrate_adaptive(const F& f, double a, double b, double tol = 1e-10, int max_depth = 48) {
  if (a == b) return T{};
  const double m = 0.5 * (a + b);
  const T fa = f(a), fm = f(m), fb = f(b);
  const T whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Integrate f over an interval of length 2*pi centered on `center`, with
/// geometrically refined panels around the center so sharply peaked
/// integrands (width down to ~1e-7 rad) are resolved.
template <typename F, typename T = std::invoke_result_t<F, double>>
T integrate_peaked(const F& f, double center, double peak_width, double tol = 1e-11) {
  double w = std::clamp(peak_width, 1e-7, pi);
  std::vector<double> offs{0.0};
  for (double s = w; s < pi; s *= 2.0) offs.push_back(s);
  offs.push_back(pi);
  T total{};
  for (std::size_t i = 0; i + 1 < offs.size(); ++i) {
    const double panel_tol = tol / static_cast<double>(2 * (offs.size() - 1));
    total += integrate_adaptive(f, center + offs[i], center + offs[i + 1], panel_tol);
    total += integrate_adaptive(f, center - offs[i + 1], center - offs[i], panel_tol);
  }
  return total;
}

}  // namespace opse
