#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/math.hpp"

namespace opse {

using Complex = std::complex<double>;

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AmbiguousRootError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ClusteringError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Digital rational filter in product form,
///   H(z) = gain * e^{-j 2 pi nu delay} * prod (1 - z_i z^-1) / prod (1 - p_i z^-1),
/// evaluated on the unit circle at z = e^{j 2 pi nu / fs}.
struct RationalFilter {
  double gain = 1.0;
  double delay_sec = 0.0;
  std::vector<Complex> zeros;
  std::vector<Complex> poles;
  double sample_rate = 48000.0;

  Complex response(double nu) const {
    const Complex w = std::polar(1.0, -two_pi * nu / sample_rate);  // z^-1
    Complex h(gain, 0.0);
    for (const auto& z : zeros) h *= 1.0 - z * w;
    for (const auto& p : poles) h /= 1.0 - p * w;
    if (delay_sec != 0.0) h *= std::polar(1.0, -two_pi * nu * delay_sec);
    return h;
  }
};

/// Unstable all-pass product: unique poles outside the unit circle with
/// multiplicities. Each factor (z^-1 - conj(p)) / (1 - p z^-1) has unit
/// magnitude on the circle, a pole at z = p outside, and the reciprocal
/// zero at 1/conj(p) inside.
struct AllPassFactorSet {
  struct Factor {
    Complex pole;
    int multiplicity = 1;
  };
  std::vector<Factor> factors;

  bool empty() const { return factors.empty(); }

  Complex response_at_w(const Complex& w) const {
    Complex h(1.0, 0.0);
    for (const auto& f : factors) {
      const Complex a = (w - std::conj(f.pole)) / (1.0 - f.pole * w);
      for (int k = 0; k < f.multiplicity; ++k) h *= a;
    }
    return h;
  }

  Complex response(double nu, double fs) const {
    return response_at_w(std::polar(1.0, -two_pi * nu / fs));
  }
};

struct FilterFactorization {
  RationalFilter min_phase;        ///< all roots strictly inside the circle
  RationalFilter stable_allpass;   ///< reflections of maximum-phase zeros
  AllPassFactorSet unstable_allpass;

  Complex response(double nu) const {
    return min_phase.response(nu) * stable_allpass.response(nu) *
           unstable_allpass.response(nu, min_phase.sample_rate);
  }
};

namespace detail {

/// Roots of c_0 + c_1 x + ... + c_n x^n via the companion matrix.
inline std::vector<Complex> poly_roots(const Eigen::VectorXd& coeffs) {
  int n = static_cast<int>(coeffs.size()) - 1;
  while (n > 0 && std::fabs(coeffs[n]) < 1e-14 * coeffs.cwiseAbs().maxCoeff()) --n;
  if (n <= 0) return {};
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) comp(i, n - 1) = -coeffs[i] / coeffs[n];
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, /*computeEigenvectors=*/false);
  std::vector<Complex> roots(n);
  for (int i = 0; i < n; ++i) roots[i] = es.eigenvalues()[i];
  return roots;
}

}  // namespace detail

struct RationalFitResult {
  RationalFilter filter;
  double relative_error = 0.0;  ///< max relative deviation over the samples
};

/// Sanathanan-Koerner style iteratively reweighted linear least squares fit
/// of a rational z-domain transfer function to frequency samples. Fixed
/// iteration count, deterministic for identical inputs.
inline RationalFitResult fit_rational(const std::vector<double>& freqs,
                                      const std::vector<Complex>& samples,
                                      int num_zeros, int num_poles,
                                      double sample_rate = 48000.0,
                                      int iterations = 20) {
  if (freqs.size() != samples.size())
    throw std::invalid_argument("fit_rational: frequency/sample size mismatch");
  if (num_zeros < 0 || num_poles < 0 || num_zeros > 32 || num_poles > 32)
    throw std::invalid_argument("fit_rational: order must lie in [0, 32]");
  const int m = static_cast<int>(freqs.size());
  if (m < 2 * (num_zeros + num_poles) && num_zeros + num_poles > 0)
    throw FitError("fit_rational: too few samples for the requested order");

  // Model B(w)/A(w) with w = z^-1 = e^{-j omega}, A(0) = 1.
  std::vector<Complex> w(m);
  for (int i = 0; i < m; ++i) w[i] = std::polar(1.0, -two_pi * freqs[i] / sample_rate);

  const int nb = num_zeros + 1, na = num_poles;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nb), a = Eigen::VectorXd::Zero(na);

  std::vector<double> wt(m, 1.0);
  for (int iter = 0; iter < iterations; ++iter) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * m, nb + na);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * m);
    for (int i = 0; i < m; ++i) {
      Complex wp(1.0, 0.0);
      for (int k = 0; k < std::max(nb, na + 1); ++k) {
        if (k < nb) {
          M(2 * i, k) = wt[i] * wp.real();
          M(2 * i + 1, k) = wt[i] * wp.imag();
        }
        if (k >= 1 && k <= na) {
          const Complex c = -samples[i] * wp;
          M(2 * i, nb + k - 1) = wt[i] * c.real();
          M(2 * i + 1, nb + k - 1) = wt[i] * c.imag();
        }
        wp *= w[i];
      }
      rhs[2 * i] = wt[i] * samples[i].real();
      rhs[2 * i + 1] = wt[i] * samples[i].imag();
    }
    Eigen::VectorXd sol = M.colPivHouseholderQr().solve(rhs);
    b = sol.head(nb);
    a = sol.tail(na);
    // reweight by 1/|A(w)| for the next pass
    for (int i = 0; i < m; ++i) {
      Complex A(1.0, 0.0), wp = w[i];
      for (int k = 0; k < na; ++k) {
        A += a[k] * wp;
        wp *= w[i];
      }
      wt[i] = 1.0 / std::max(std::abs(A), 1e-12);
    }
  }

  // Evaluate residual and convert to product form.
  auto eval = [&](const Complex& wi) {
    Complex B(0.0, 0.0), A(1.0, 0.0), wp(1.0, 0.0);
    for (int k = 0; k < nb; ++k) {
      B += b[k] * wp;
      wp *= wi;
    }
    wp = wi;
    for (int k = 0; k < na; ++k) {
      A += a[k] * wp;
      wp *= wi;
    }
    return B / A;
  };
  double rel = 0.0, scale = 0.0;
  for (int i = 0; i < m; ++i) scale = std::max(scale, std::abs(samples[i]));
  for (int i = 0; i < m; ++i)
    rel = std::max(rel, std::abs(eval(w[i]) - samples[i]) / std::max(scale, 1e-300));

  RationalFilter f;
  f.sample_rate = sample_rate;
  // B(w) = b0 * prod(1 - z_i w) with z_i = 1/root_i; roots at w = 0 cannot
  // occur since b0 != 0 in the generic fit.
  Eigen::VectorXd acoef(na + 1);
  acoef[0] = 1.0;
  for (int k = 0; k < na; ++k) acoef[k + 1] = a[k];
  const auto broots = detail::poly_roots(b);
  const auto aroots = detail::poly_roots(acoef);
  for (const auto& r : broots) {
    if (std::abs(r) < 1e-12) throw FitError("fit_rational: numerator root at w = 0");
    f.zeros.push_back(1.0 / r);
  }
  for (const auto& r : aroots) {
    if (std::abs(r) < 1e-12) throw FitError("fit_rational: denominator root at w = 0");
    f.poles.push_back(1.0 / r);
  }
  f.gain = b[0];  // B(0)/A(0)

  // Excess order shows up as coincident zero/pole doublets whose placement is
  // arbitrary (the samples do not constrain them); drop them so they cannot
  // leak into the all-pass bookkeeping downstream.
  for (std::size_t i = 0; i < f.zeros.size();) {
    std::size_t best = f.poles.size();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < f.poles.size(); ++j) {
      const double d = std::abs(f.zeros[i] - f.poles[j]);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    if (best < f.poles.size() && bd < 1e-7 * std::max(1.0, std::abs(f.zeros[i]))) {
      f.zeros.erase(f.zeros.begin() + static_cast<std::ptrdiff_t>(i));
      f.poles.erase(f.poles.begin() + static_cast<std::ptrdiff_t>(best));
    } else {
      ++i;
    }
  }
  return {f, rel};
}

/// Split a rational filter into minimum-phase, stable all-pass, and unstable
/// all-pass parts. Roots within `circle_tol` of the unit circle are rejected
/// as ambiguous.
inline FilterFactorization factorize(const RationalFilter& f, double circle_tol = 1e-6) {
  FilterFactorization out;
  out.min_phase.sample_rate = f.sample_rate;
  out.min_phase.delay_sec = f.delay_sec;
  out.stable_allpass.sample_rate = f.sample_rate;

  auto on_circle = [&](const Complex& r) { return std::fabs(std::abs(r) - 1.0) < circle_tol; };
  for (const auto& r : f.zeros)
    if (on_circle(r))
      throw AmbiguousRootError("factorize: zero within the unit-circle tolerance band, |z| = " +
                               std::to_string(std::abs(r)));
  for (const auto& r : f.poles)
    if (on_circle(r))
      throw AmbiguousRootError("factorize: pole within the unit-circle tolerance band, |z| = " +
                               std::to_string(std::abs(r)));

  Complex gain(f.gain, 0.0), ap_gain(1.0, 0.0);
  for (const auto& z : f.zeros) {
    if (std::abs(z) < 1.0) {
      out.min_phase.zeros.push_back(z);
    } else {
      // (1 - z0 w) = (-z0) * V_q(w) * (1 - q w), q = 1/conj(z0), where
      // V_q(w) = (w - conj(q))/(1 - q w) = (-1/z0)(1 - z0 w)/(1 - q w)
      // is a unit-modulus stable all-pass (pole q inside, zero z0 outside).
      const Complex q = 1.0 / std::conj(z);
      out.min_phase.zeros.push_back(q);
      out.stable_allpass.poles.push_back(q);
      out.stable_allpass.zeros.push_back(z);
      gain *= -z;
      ap_gain *= -1.0 / z;
    }
  }
  for (const auto& p : f.poles) {
    if (std::abs(p) < 1.0) {
      out.min_phase.poles.push_back(p);
    } else {
      // 1/(1 - p w) = (-1/conj(p)) * U_p(w) / (1 - (1/conj(p)) w) with the
      // unit-modulus unstable all-pass U_p(w) = (w - conj(p))/(1 - p w).
      out.min_phase.poles.push_back(1.0 / std::conj(p));
      bool merged = false;
      for (auto& fac : out.unstable_allpass.factors)
        if (std::abs(fac.pole - p) < 1e-9) {
          ++fac.multiplicity;
          merged = true;
          break;
        }
      if (!merged) out.unstable_allpass.factors.push_back({p, 1});
      gain *= -1.0 / std::conj(p);
    }
  }
  if (std::abs(gain.imag()) > 1e-9 * std::max(1.0, std::abs(gain)) ||
      std::abs(ap_gain.imag()) > 1e-9 * std::abs(ap_gain))
    throw AmbiguousRootError("factorize: unpaired complex roots leave a complex gain");
  out.min_phase.gain = gain.real();
  out.stable_allpass.gain = ap_gain.real();
  return out;
}

/// Least-common-multiple all-pass: union of pole clusters across the input
/// sets at maximum multiplicity. Poles within match_tol cluster together;
/// two poles of a single input set in one cluster is an error.
inline AllPassFactorSet lcm_allpass(const std::vector<AllPassFactorSet>& sets,
                                    double match_tol = 1e-4) {
  if (!(match_tol > 0.0)) throw std::invalid_argument("lcm_allpass: match_tol must be positive");
  struct Cluster {
    Complex centroid;
    double weight = 0.0;
    int max_mult = 0;
  };
  std::vector<Cluster> clusters;
  for (const auto& set : sets) {
    std::vector<int> assigned;  // cluster index already used by this set
    for (const auto& fac : set.factors) {
      int hit = -1;
      for (std::size_t c = 0; c < clusters.size(); ++c)
        if (std::abs(clusters[c].centroid - fac.pole) < match_tol) {
          if (hit >= 0 ||
              std::find(assigned.begin(), assigned.end(), static_cast<int>(c)) != assigned.end())
            throw ClusteringError("lcm_allpass: two poles of one set fall in a single cluster");
          hit = static_cast<int>(c);
        }
      if (hit < 0) {
        clusters.push_back({fac.pole, 1.0, fac.multiplicity});
        assigned.push_back(static_cast<int>(clusters.size()) - 1);
      } else {
        auto& c = clusters[hit];
        c.centroid = (c.centroid * c.weight + fac.pole) / (c.weight + 1.0);
        c.weight += 1.0;
        c.max_mult = std::max(c.max_mult, fac.multiplicity);
        assigned.push_back(hit);
      }
    }
  }
  AllPassFactorSet out;
  for (const auto& c : clusters) out.factors.push_back({c.centroid, c.max_mult});
  return out;
}

}  // namespace opse
