#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace opse::ip {

/// maximize  g'z - z'Rz - 2 r'z   (R is a tiny deterministic tie-break ridge)
/// s.t.      L z + b >= 0  rowwise
///           z'Qz + 2 q'z + q0 <= rho   (optional)
struct ConeProgram {
  Eigen::VectorXd g;
  Eigen::MatrixXd L;
  Eigen::VectorXd b;
  Eigen::MatrixXd R;  // may be size 0 for no ridge
  Eigen::VectorXd r;

  bool has_quad = false;
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  double q0 = 0.0;
  double rho = 0.0;

  int dim() const { return static_cast<int>(g.size()); }
};

struct ConeResult {
  Eigen::VectorXd z;
  bool strict_interior = false;  ///< phase-I found an interior point
  double objective = 0.0;
};

namespace detail {

inline double quad_value(const ConeProgram& p, const Eigen::VectorXd& z) {
  return z.dot(p.Q * z) + 2.0 * p.q.dot(z) + p.q0;
}

/// All constraint slacks; the quadratic one last when present.
inline Eigen::VectorXd slacks(const ConeProgram& p, const Eigen::VectorXd& z) {
  const int ml = static_cast<int>(p.L.rows());
  Eigen::VectorXd s(ml + (p.has_quad ? 1 : 0));
  s.head(ml) = p.L * z + p.b;
  if (p.has_quad) s[ml] = p.rho - quad_value(p, z);
  return s;
}

/// Damped Newton minimization of the log-barrier objective
///   phi(z) = -t (g'z - z'Rz - 2 r'z) - sum log slack_i(z)
/// starting from a strictly feasible z.
inline void newton_center(const ConeProgram& p, double t, Eigen::VectorXd& z) {
  const int n = p.dim();
  const int ml = static_cast<int>(p.L.rows());
  const bool ridge = p.R.size() > 0;

  auto phi = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd s = slacks(p, x);
    if ((s.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
    double obj = p.g.dot(x);
    if (ridge) obj -= x.dot(p.R * x) + 2.0 * p.r.dot(x);
    return -t * obj - s.array().log().sum();
  };

  for (int iter = 0; iter < 60; ++iter) {
    const Eigen::VectorXd s = slacks(p, z);
    Eigen::VectorXd grad = -t * p.g;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    if (ridge) {
      grad += t * (2.0 * p.R * z + 2.0 * p.r);
      hess += t * 2.0 * p.R;
    }
    for (int i = 0; i < ml; ++i) {
      const Eigen::VectorXd li = p.L.row(i).transpose();
      grad -= li / s[i];
      hess += li * li.transpose() / (s[i] * s[i]);
    }
    if (p.has_quad) {
      const double sq = s[ml];
      const Eigen::VectorXd fp = 2.0 * (p.Q * z + p.q);
      grad += fp / sq;
      hess += 2.0 * p.Q / sq + fp * fp.transpose() / (sq * sq);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess +
                                      1e-12 * hess.diagonal().cwiseAbs().maxCoeff() *
                                          Eigen::MatrixXd::Identity(n, n));
    const Eigen::VectorXd step = -ldlt.solve(grad);
    const double decrement = -grad.dot(step);
    if (!(decrement > 1e-13 * (1.0 + std::abs(t)))) return;

    const double f0 = phi(z);
    double alpha = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      if (phi(z + alpha * step) <= f0 - 1e-4 * alpha * decrement) break;
      alpha *= 0.5;
    }
    z += alpha * step;
  }
}

/// Barrier method: geometric schedule on t from a strictly feasible start.
inline Eigen::VectorXd barrier_maximize(const ConeProgram& p, Eigen::VectorXd z) {
  const double m = static_cast<double>(p.L.rows() + (p.has_quad ? 1 : 0));
  double t = 1.0;
  while (m / t > 1e-11) {
    newton_center(p, t, z);
    t *= 20.0;
    if (t > 1e14) break;
  }
  newton_center(p, t, z);
  return z;
}

/// Phase-I: maximize the minimum slack margin u over (z, u); succeeds when a
/// strictly positive margin exists.
inline std::optional<Eigen::VectorXd> find_interior(const ConeProgram& p) {
  const int n = p.dim();
  const int ml = static_cast<int>(p.L.rows());
  const int mq = p.has_quad ? 1 : 0;

  // augmented program over (z, u): maximize u s.t. slack_i(z) - u >= 0
  ConeProgram aug;
  aug.g = Eigen::VectorXd::Zero(n + 1);
  aug.g[n] = 1.0;
  aug.L = Eigen::MatrixXd::Zero(ml + mq + 1, n + 1);
  aug.b = Eigen::VectorXd::Zero(ml + mq + 1);
  aug.L.topLeftCorner(ml, n) = p.L;
  aug.L.col(n).head(ml).setConstant(-1.0);
  aug.b.head(ml) = p.b;
  // cap u so the phase-I problem is bounded
  double cap = 1.0 + p.b.cwiseAbs().maxCoeff();
  if (p.has_quad) cap = std::max(cap, 1.0 + std::abs(p.rho) + std::abs(p.q0));
  aug.L(ml + mq, n) = -1.0;
  aug.b[ml + mq] = cap;
  if (p.has_quad) {
    // rho - quad(z) - u >= 0 is not affine; lift it into the quadratic slot
    aug.has_quad = true;
    aug.Q = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.Q.topLeftCorner(n, n) = p.Q;
    aug.q = Eigen::VectorXd::Zero(n + 1);
    aug.q.head(n) = p.q;
    aug.q[n] = 0.5;  // contributes +u via 2 q'z
    aug.q0 = p.q0;
    aug.rho = p.rho;
    aug.L.row(ml).setZero();  // placeholder row: u <= cap handled above
    aug.L(ml, n) = -1.0;
    aug.b[ml] = cap;
  }

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(n + 1);
  const Eigen::VectorXd s0 = slacks(p, Eigen::VectorXd::Zero(n));
  z0[n] = s0.minCoeff() - 1.0;

  Eigen::VectorXd zu = barrier_maximize(aug, z0);
  const double margin_scale = 1.0 + p.b.cwiseAbs().maxCoeff();
  if (zu[n] <= 1e-9 * margin_scale) return std::nullopt;
  Eigen::VectorXd z = zu.head(n);
  if ((slacks(p, z).array() <= 0.0).any()) return std::nullopt;
  return z;
}

/// Exact active-set polish: re-solve with the barrier-identified active
/// constraints as equalities; closed form for linear objective over an
/// affine slice of the ellipsoid.
inline void polish(const ConeProgram& p, Eigen::VectorXd& z) {
  const int n = p.dim();
  const int ml = static_cast<int>(p.L.rows());
  const Eigen::VectorXd s = slacks(p, z);
  const double scale = 1.0 + p.b.cwiseAbs().maxCoeff() + z.cwiseAbs().maxCoeff();

  std::vector<int> active;
  for (int i = 0; i < ml; ++i)
    if (s[i] < 1e-6 * scale) active.push_back(i);
  const bool quad_active = p.has_quad && s[ml] < 1e-6 * (1.0 + std::abs(p.rho));

  Eigen::MatrixXd E(active.size(), n);
  Eigen::VectorXd d(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    E.row(i) = p.L.row(active[i]);
    d[i] = -p.b[active[i]];
  }

  // z = z_p + W u with W spanning ker(E)
  Eigen::VectorXd z_p = z;
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(n, n);
  if (active.size() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeFullV | Eigen::ComputeThinU);
    z_p = svd.solve(d);
    const double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-12 * std::max(smax, 1.0)) ++rank;
    if (rank == n) {
      W.resize(n, 0);
    } else {
      W = svd.matrixV().rightCols(n - rank);
    }
  }

  Eigen::VectorXd cand = z_p;
  if (W.cols() > 0) {
    if (quad_active) {
      const Eigen::MatrixXd H = W.transpose() * p.Q * W;
      const Eigen::VectorXd rbar = W.transpose() * (p.Q * z_p + p.q);
      const double c0 = quad_value(p, z_p);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Eigen::VectorXd uc = -ldlt.solve(rbar);
        // squared radius in the ellipsoid metric around the center uc
        const double rad2 = p.rho - (c0 + 2.0 * rbar.dot(uc) + uc.dot(H * uc));
        const Eigen::VectorXd gbar = W.transpose() * p.g;
        if (rad2 > 0.0 && gbar.norm() > 0.0) {
          const Eigen::VectorXd Hg = ldlt.solve(gbar);
          const double denom = gbar.dot(Hg);
          if (denom > 0.0) cand = z_p + W * (uc + Hg * std::sqrt(rad2 / denom));
        } else {
          cand = z_p + W * uc;
        }
      }
    }
    // quadratic inactive: the optimum is pinned by the active linear rows;
    // any remaining freedom means gbar ~ 0, keep the barrier point then
  }

  // accept only if feasible and at least as good
  const Eigen::VectorXd sc = slacks(p, cand);
  if (sc.minCoeff() >= -1e-9 * scale && p.g.dot(cand) >= p.g.dot(z) - 1e-9 * (1.0 + std::abs(p.g.dot(z))))
    z = cand;
}

}  // namespace detail

/// KKT stationarity residual of `z` for the program (active multipliers by
/// nonnegative least squares; returns the norm of the Lagrangian gradient
/// plus any primal violation).
inline double kkt_residual(const ConeProgram& p, const Eigen::VectorXd& z) {
  const int n = p.dim();
  const int ml = static_cast<int>(p.L.rows());
  const Eigen::VectorXd s = detail::slacks(p, z);
  const double scale = 1.0 + p.b.cwiseAbs().maxCoeff() + z.cwiseAbs().maxCoeff();

  double primal = 0.0;
  for (int i = 0; i < s.size(); ++i) primal += std::max(0.0, -s[i]);

  std::vector<int> active;
  for (int i = 0; i < ml; ++i)
    if (s[i] < 1e-6 * scale) active.push_back(i);
  const bool quad_active = p.has_quad && s[ml] < 1e-6 * (1.0 + std::abs(p.rho));

  // stationarity of max g'z with slack_i(z) >= 0: g + sum mu_i grad slack_i = 0
  Eigen::MatrixXd J(n, active.size() + (quad_active ? 1 : 0));
  for (std::size_t i = 0; i < active.size(); ++i) J.col(i) = -p.L.row(active[i]).transpose();
  if (quad_active) J.col(active.size()) = 2.0 * (p.Q * z + p.q);

  Eigen::VectorXd g = p.g;
  if (J.cols() == 0) return g.norm() + primal;
  // nonnegative multipliers by Lawson-Hanson NNLS; a plain least-squares fit
  // picks negative components at degenerate vertices (more active
  // constraints than dimensions) and misreports the residual
  const int m = static_cast<int>(J.cols());
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(m, false);
  Eigen::VectorXd resid = g;
  for (int outer = 0; outer < 6 * m + 30; ++outer) {
    int best = -1;
    double bw = 1e-12 * (1.0 + g.norm());
    for (int i = 0; i < m; ++i)
      if (!passive[i]) {
        const double w = J.col(i).dot(resid);
        if (w > bw) {
          bw = w;
          best = i;
        }
      }
    if (best < 0) break;
    passive[best] = true;
    for (;;) {
      std::vector<int> idx;
      for (int i = 0; i < m; ++i)
        if (passive[i]) idx.push_back(i);
      Eigen::MatrixXd Jp(J.rows(), idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) Jp.col(i) = J.col(idx[i]);
      const Eigen::VectorXd t = Jp.colPivHouseholderQr().solve(g);
      if ((t.array() > 0.0).all()) {
        mu.setZero();
        for (std::size_t i = 0; i < idx.size(); ++i) mu[idx[i]] = t[i];
        break;
      }
      double alpha = 1.0;
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (t[i] <= 0.0) alpha = std::min(alpha, mu[idx[i]] / (mu[idx[i]] - t[i]));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        mu[idx[i]] += alpha * (t[i] - mu[idx[i]]);
        if (mu[idx[i]] <= 1e-14) {
          mu[idx[i]] = 0.0;
          passive[idx[i]] = false;
        }
      }
    }
    resid = g - J * mu;
  }
  return (g - J * mu).norm() + primal;
}

/// Maximize the program; requires a strictly feasible region (phase-I
/// otherwise reports no interior via `strict_interior = false`).
inline ConeResult maximize(const ConeProgram& p) {
  if (p.L.rows() != p.b.size() || p.L.cols() != p.g.size())
    throw std::invalid_argument("ip::maximize: inconsistent dimensions");
  ConeResult out;
  auto interior = detail::find_interior(p);
  if (!interior) {
    out.strict_interior = false;
    out.z = Eigen::VectorXd::Zero(p.dim());
    return out;
  }
  out.strict_interior = true;
  out.z = detail::barrier_maximize(p, *interior);
  detail::polish(p, out.z);
  out.objective = p.g.dot(out.z);
  return out;
}

}  // namespace opse::ip
