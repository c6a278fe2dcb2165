#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <stdexcept>
#include <string>

#include "opse/math.hpp"

namespace opse {

struct IndefiniteCovarianceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs for the listener-point / listening-area covariance mixture.
struct CovarianceSpec {
  double alpha = 0.0;        ///< mixture weight in [0, 1]
  double radius = 0.0;       ///< listening-area disc radius tau_r, meters
  double kappa = 0.0;        ///< wavenumber, rad/m
  double on_axis_power = 1.0;  ///< |S(nu, 0)|^2 shared by the normalized speakers
  Eigen::Matrix2Xd directions;  ///< loudspeaker unit directions, one column each

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("CovarianceSpec: alpha outside [0, 1]");
    if (!(radius >= 0.0)) throw std::invalid_argument("CovarianceSpec: negative radius");
    if (!(kappa >= 0.0)) throw std::invalid_argument("CovarianceSpec: negative wavenumber");
    if (!(on_axis_power > 0.0))
      throw std::invalid_argument("CovarianceSpec: on-axis power must be positive");
    if (directions.cols() < 1)
      throw std::invalid_argument("CovarianceSpec: needs at least one direction");
    for (Eigen::Index n = 0; n < directions.cols(); ++n)
      if (std::fabs(directions.col(n).norm() - 1.0) > 1e-9)
        throw std::invalid_argument("CovarianceSpec: direction " + std::to_string(n) +
                                    " is not a unit vector");
  }
};

namespace detail {

/// Symmetrize and clip the slightly negative eigenvalues produced by
/// round-off; anything below the tolerance is a genuine modeling error.
inline Eigen::MatrixXd enforce_psd(const Eigen::MatrixXd& K, double tol = 1e-10) {
  Eigen::MatrixXd S = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol * scale)
    throw IndefiniteCovarianceError("covariance: eigenvalue " + std::to_string(ev.minCoeff()) +
                                    " below the PSD tolerance");
  if (ev.minCoeff() >= 0.0) return S;
  Eigen::VectorXd clipped = ev.cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Plane-wave covariance of the loudspeaker signals averaged over a uniform
/// disc of radius tau_r: Kbar_ij = |S|^2 2 J1(D_ij kappa tau_r)/(D_ij kappa tau_r)
/// with D_ij the chord distance between unit directions.
inline Eigen::MatrixXd planewave_cov(const CovarianceSpec& spec) {
  spec.validate();
  const Eigen::Index N = spec.directions.cols();
  Eigen::MatrixXd K(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d = (spec.directions.col(i) - spec.directions.col(j)).norm();
      const double v = spec.on_axis_power * jinc(d * spec.kappa * spec.radius);
      K(i, j) = v;
      K(j, i) = v;
    }
  return detail::enforce_psd(K);
}

/// Listener-point covariance: every speaker's contribution adds coherently,
/// Kring = |S|^2 11^T.
inline Eigen::MatrixXd point_cov(const CovarianceSpec& spec) {
  spec.validate();
  const Eigen::Index N = spec.directions.cols();
  return spec.on_axis_power * Eigen::MatrixXd::Ones(N, N);
}

/// K = (1 - alpha) Kring + alpha Kbar.
inline Eigen::MatrixXd mixture_cov(const CovarianceSpec& spec) {
  return (1.0 - spec.alpha) * point_cov(spec) + spec.alpha * planewave_cov(spec);
}

}  // namespace opse
