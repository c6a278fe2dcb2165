#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/solver.hpp"

namespace opse {

struct UndefinedMetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PowerSlackError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PowerMode { equality, inequality };
enum class SolveForm { augmented, primary, nullspace };
enum class SolveStatus { optimal, relaxed_fallback, infeasible_direction };

struct PanningProblem {
  Eigen::Matrix2Xd V;   ///< loudspeaker unit directions, one column each
  Eigen::Vector2d s;    ///< steering unit direction
  Eigen::MatrixXd K;    ///< acoustic covariance, PSD
  double rho = 1.0;     ///< acoustic power target
  Eigen::VectorXd tau;  ///< per-speaker headroom upper bounds
  PowerMode power_mode = PowerMode::inequality;

  Eigen::Index size() const { return V.cols(); }

  void validate() const {
    const Eigen::Index N = V.cols();
    if (N < 1) throw std::invalid_argument("PanningProblem: no loudspeakers");
    for (Eigen::Index i = 0; i < N; ++i)
      if (std::fabs(V.col(i).norm() - 1.0) > 1e-10)
        throw std::invalid_argument("PanningProblem: direction " + std::to_string(i) +
                                    " is not a unit vector");
    if (std::fabs(s.norm() - 1.0) > 1e-10)
      throw std::invalid_argument("PanningProblem: steering direction is not a unit vector");
    if (K.rows() != N || K.cols() != N)
      throw std::invalid_argument("PanningProblem: covariance dimension mismatch");
    if (!K.isApprox(K.transpose(), 1e-10))
      throw std::invalid_argument("PanningProblem: covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    if (es.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
      throw std::invalid_argument("PanningProblem: covariance is not PSD");
    if (!(rho > 0.0)) throw std::invalid_argument("PanningProblem: rho must be positive");
    if (tau.size() != N) throw std::invalid_argument("PanningProblem: tau dimension mismatch");
    if ((tau.array() <= 0.0).any())
      throw std::invalid_argument("PanningProblem: tau must be positive");
  }
};

struct PanningSolution {
  Eigen::VectorXd x;
  double lambda = 0.0;
  double sensitivity = 0.0;
  double efficiency_electric = 0.0;
  double efficiency_acoustic = 0.0;
  SolveStatus status = SolveStatus::infeasible_direction;
  double kkt_residual = 0.0;
};

struct NullSpaceProblem {
  Eigen::MatrixXd basis;      ///< orthonormal columns spanning ker((I - ss^T)V)
  Eigen::VectorXd c_reduced;  ///< basis^T V^T s
  Eigen::MatrixXd K_reduced;  ///< basis^T K basis
  bool degenerate = false;    ///< rank((I - ss^T)V) = 0, nullity N
};

enum class Feasibility { feasible, infeasible };

/// A steering direction is feasible when it lies on some minor arc between a
/// loudspeaker pair (equivalently: it is a nonnegative combination of a pair
/// of directions), or coincides with a loudspeaker.
inline Feasibility feasibility(const Eigen::Matrix2Xd& V, const Eigen::Vector2d& s) {
  const Eigen::Index N = V.cols();
  if (N < 1) throw std::invalid_argument("feasibility: no loudspeakers");
  for (Eigen::Index i = 0; i < N; ++i)
    if (V.col(i).dot(s) >= 1.0 - 1e-9) return Feasibility::feasible;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) {
      Eigen::Matrix2d M;
      M.col(0) = V.col(i);
      M.col(1) = V.col(j);
      const double det = M.determinant();
      if (std::fabs(det) < 1e-12) continue;
      const Eigen::Vector2d ab = M.inverse() * s;
      if (ab[0] >= -1e-12 && ab[1] >= -1e-12) return Feasibility::feasible;
    }
  return Feasibility::infeasible;
}

/// sensitivity lambda/(x^T 1) and the electric/acoustic power-ratio
/// efficiencies ||Vx||^2 / x^T x and ||Vx||^2 / x^T K x.
struct Metrics {
  double sensitivity;
  double efficiency_electric;
  double efficiency_acoustic;
};

inline Metrics metrics(const Eigen::VectorXd& x, const Eigen::Matrix2Xd& V,
                       const Eigen::Vector2d& s, const Eigen::MatrixXd& K) {
  if (x.size() != V.cols()) throw std::invalid_argument("metrics: dimension mismatch");
  if (x.cwiseAbs().maxCoeff() <= 0.0) throw UndefinedMetricsError("metrics: x = 0");
  const Eigen::Vector2d field = V * x;
  const double lambda = s.dot(field);
  const double acoustic = x.dot(K * x);
  return {lambda / x.sum(), field.squaredNorm() / x.squaredNorm(),
          acoustic > 0.0 ? field.squaredNorm() / acoustic
                         : std::numeric_limits<double>::infinity()};
}

/// Orthonormal kernel basis of A = (I - ss^T)V; generically rank(A) = 1 and
/// the nullity is N - 1. All-collinear layouts give A = 0 (degenerate).
inline NullSpaceProblem nullspace_basis(const Eigen::Matrix2Xd& V, const Eigen::Vector2d& s,
                                        const Eigen::MatrixXd& K = Eigen::MatrixXd()) {
  const Eigen::Index N = V.cols();
  if (N < 2) throw std::invalid_argument("nullspace_basis: needs N >= 2");
  const Eigen::MatrixXd A = (Eigen::Matrix2d::Identity() - s * s.transpose()) * V;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-12 * std::max(smax, 1.0)) ++rank;

  NullSpaceProblem out;
  out.degenerate = (rank == 0);
  out.basis = out.degenerate ? Eigen::MatrixXd::Identity(N, N)
                             : Eigen::MatrixXd(svd.matrixV().rightCols(N - rank));
  out.c_reduced = out.basis.transpose() * (V.transpose() * s);
  if (K.size() > 0) out.K_reduced = out.basis.transpose() * K * out.basis;
  return out;
}

namespace detail {

struct KRank1 {
  bool rank1 = false;
  Eigen::VectorXd p;  ///< K = p p^T when rank1
};

inline KRank1 detect_rank1(const Eigen::MatrixXd& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const Eigen::Index N = ev.size();
  KRank1 out;
  if (N == 1) {
    out.rank1 = true;
    out.p = Eigen::VectorXd::Constant(1, std::sqrt(std::max(ev[0], 0.0)));
    return out;
  }
  const double top = ev[N - 1];
  if (top <= 0.0) return out;
  if (ev.head(N - 1).cwiseAbs().maxCoeff() > 1e-12 * top) return out;
  out.rank1 = true;
  out.p = std::sqrt(top) * es.eigenvectors().col(N - 1);
  Eigen::Index imax = 0;
  out.p.cwiseAbs().maxCoeff(&imax);
  if (out.p[imax] < 0.0) out.p = -out.p;
  return out;
}

/// Variable model of one solve form: engine variables z, gains x = Xmap z,
/// objective obj'z, equality rows Eq z = eqd, extra inequalities Lx z + bx >= 0.
struct FormModel {
  Eigen::MatrixXd Xmap;
  Eigen::VectorXd obj;
  Eigen::MatrixXd Eq;
  Eigen::VectorXd eqd;
  Eigen::MatrixXd Lx;
  Eigen::VectorXd bx;
};

struct Reduced {
  Eigen::MatrixXd F;    ///< z = z_p + F u
  Eigen::VectorXd z_p;
  bool consistent = true;
};

inline Reduced eliminate_equalities(const Eigen::MatrixXd& Eq, const Eigen::VectorXd& d, int n) {
  Reduced out;
  if (Eq.rows() == 0) {
    out.F = Eigen::MatrixXd::Identity(n, n);
    out.z_p = Eigen::VectorXd::Zero(n);
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eq, Eigen::ComputeFullV | Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-12 * std::max(smax, 1.0)) ++rank;
  out.z_p = svd.solve(d);
  out.consistent = (Eq * out.z_p - d).norm() <= 1e-8 * (1.0 + d.norm());
  out.F = rank == n ? Eigen::MatrixXd(n, 0) : Eigen::MatrixXd(svd.matrixV().rightCols(n - rank));
  return out;
}

}  // namespace detail

inline PanningSolution solve_relaxed(const PanningProblem& problem);

namespace detail {

inline PanningSolution finish(const PanningProblem& problem, Eigen::VectorXd x,
                              SolveStatus status, double kkt) {
  // snap round-off violations back into the box
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], 0.0, problem.tau[i]);
  PanningSolution sol;
  sol.x = x;
  sol.status = status;
  sol.kkt_residual = kkt;
  if (x.cwiseAbs().maxCoeff() > 0.0) {
    const Metrics m = metrics(x, problem.V, problem.s, problem.K);
    sol.lambda = problem.s.dot(problem.V * x);
    sol.sensitivity = m.sensitivity;
    sol.efficiency_electric = m.efficiency_electric;
    sol.efficiency_acoustic = m.efficiency_acoustic;
  }
  return sol;
}

inline PanningSolution solve_impl(const PanningProblem& problem, SolveForm form) {
  problem.validate();
  const Eigen::Index N = problem.size();
  if (form == SolveForm::nullspace && N < 2)
    throw std::invalid_argument("solve: nullspace form needs N >= 2");

  if (feasibility(problem.V, problem.s) == Feasibility::infeasible)
    return finish(problem, Eigen::VectorXd::Zero(N), SolveStatus::infeasible_direction, 0.0);

  // VBAPS row a'x = 0 with a_i = s_perp . v_i. When every nonzero entry has
  // one sign, those gains are forced to zero (steering at a layout vertex);
  // restrict to the speakers collinear with s.
  const Eigen::Vector2d sperp(-problem.s.y(), problem.s.x());
  Eigen::RowVectorXd a = sperp.transpose() * problem.V;
  std::vector<Eigen::Index> keep;
  {
    bool has_pos = false, has_neg = false;
    for (Eigen::Index i = 0; i < N; ++i) {
      if (a[i] > 1e-12) has_pos = true;
      if (a[i] < -1e-12) has_neg = true;
    }
    if (has_pos != has_neg || (!has_pos && !has_neg)) {
      for (Eigen::Index i = 0; i < N; ++i)
        if (std::fabs(a[i]) <= 1e-12 && problem.V.col(i).dot(problem.s) > 0.0) keep.push_back(i);
      if (keep.empty())
        return finish(problem, Eigen::VectorXd::Zero(N), SolveStatus::infeasible_direction, 0.0);
      if (keep.size() < static_cast<std::size_t>(N)) {
        PanningProblem sub;
        sub.V.resize(2, keep.size());
        sub.tau.resize(keep.size());
        sub.K.resize(keep.size(), keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
          sub.V.col(i) = problem.V.col(keep[i]);
          sub.tau[i] = problem.tau[keep[i]];
          for (std::size_t j = 0; j < keep.size(); ++j) sub.K(i, j) = problem.K(keep[i], keep[j]);
        }
        sub.s = problem.s;
        sub.rho = problem.rho;
        sub.power_mode = problem.power_mode;
        const SolveForm sub_form =
            (form == SolveForm::nullspace && keep.size() < 2) ? SolveForm::primary : form;
        PanningSolution s_sub = solve_impl(sub, sub_form);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
        for (std::size_t i = 0; i < keep.size(); ++i) x[keep[i]] = s_sub.x[i];
        return finish(problem, x, s_sub.status, s_sub.kkt_residual);
      }
    }
  }

  const KRank1 kr = detect_rank1(problem.K);
  const Eigen::VectorXd c = problem.V.transpose() * problem.s;

  // Build the variable model of the requested form.
  FormModel fm;
  const bool have_a = a.cwiseAbs().maxCoeff() > 1e-12;
  if (form == SolveForm::primary) {
    fm.Xmap = Eigen::MatrixXd::Identity(N, N);
    fm.obj = c;
    fm.Eq = have_a ? Eigen::MatrixXd(a) : Eigen::MatrixXd(0, N);
    fm.eqd = Eigen::VectorXd::Zero(fm.Eq.rows());
    fm.Lx = c.transpose();  // c'x >= 0 keeps lambda nonnegative
    fm.bx = Eigen::VectorXd::Zero(1);
  } else if (form == SolveForm::augmented) {
    fm.Xmap = Eigen::MatrixXd::Zero(N, N + 1);
    fm.Xmap.leftCols(N).setIdentity();
    fm.obj = Eigen::VectorXd::Zero(N + 1);
    fm.obj[N] = 1.0;
    fm.Eq = Eigen::MatrixXd::Zero(2, N + 1);
    fm.Eq.leftCols(N) = problem.V;
    fm.Eq.col(N) = -problem.s;
    fm.eqd = Eigen::VectorXd::Zero(2);
    fm.Lx = Eigen::MatrixXd::Zero(1, N + 1);  // lambda >= 0
    fm.Lx(0, N) = 1.0;
    fm.bx = Eigen::VectorXd::Zero(1);
  } else {
    const NullSpaceProblem ns = nullspace_basis(problem.V, problem.s, problem.K);
    fm.Xmap = ns.basis;
    fm.obj = ns.c_reduced;
    fm.Eq = Eigen::MatrixXd(0, ns.basis.cols());
    fm.eqd = Eigen::VectorXd(0);
    fm.Lx = ns.c_reduced.transpose();  // c'x = cbar'y >= 0
    fm.bx = Eigen::VectorXd::Zero(1);
  }

  // Equality acoustic power with rank-1 K becomes the linear equality
  // p'x = sqrt(rho); with full-rank K we solve the inequality program and
  // assert tightness afterwards.
  const bool power_equality_row = problem.power_mode == PowerMode::equality && kr.rank1;
  if (power_equality_row) {
    const Eigen::Index old = fm.Eq.rows();
    fm.Eq.conservativeResize(old + 1, Eigen::NoChange);
    fm.Eq.row(old) = kr.p.transpose() * fm.Xmap;
    fm.eqd.conservativeResize(old + 1);
    fm.eqd[old] = std::sqrt(problem.rho);
  }

  const int nz = static_cast<int>(fm.Xmap.cols());
  const Reduced red = eliminate_equalities(fm.Eq, fm.eqd, nz);
  if (!red.consistent)
    return finish(problem, Eigen::VectorXd::Zero(N), SolveStatus::infeasible_direction, 0.0);

  const Eigen::MatrixXd Xu = fm.Xmap * red.F;
  const Eigen::VectorXd xc = fm.Xmap * red.z_p;

  ip::ConeProgram cp;
  cp.g = red.F.transpose() * fm.obj;
  const Eigen::Index n_extra = fm.Lx.rows();
  Eigen::Index rows = 2 * N + n_extra;
  const bool linear_power = kr.rank1 && !power_equality_row;
  if (linear_power) rows += 2;
  cp.L.resize(rows, red.F.cols());
  cp.b.resize(rows);
  cp.L.topRows(N) = Xu;
  cp.b.head(N) = xc;
  cp.L.middleRows(N, N) = -Xu;
  cp.b.segment(N, N) = problem.tau - xc;
  cp.L.middleRows(2 * N, n_extra) = fm.Lx * red.F;
  cp.b.segment(2 * N, n_extra) = fm.bx + fm.Lx * red.z_p;
  if (linear_power) {
    const Eigen::RowVectorXd pu = kr.p.transpose() * Xu;
    const double pc = kr.p.dot(xc);
    cp.L.row(2 * N + n_extra) = -pu;
    cp.b[2 * N + n_extra] = std::sqrt(problem.rho) - pc;
    cp.L.row(2 * N + n_extra + 1) = pu;
    cp.b[2 * N + n_extra + 1] = std::sqrt(problem.rho) + pc;
  } else if (!power_equality_row) {
    cp.has_quad = true;
    cp.Q = Xu.transpose() * problem.K * Xu;
    cp.q = Xu.transpose() * (problem.K * xc);
    cp.q0 = xc.dot(problem.K * xc);
    cp.rho = problem.rho;
  }
  // (with an equality power row the power budget is already eliminated)
  cp.R = 1e-10 * (Xu.transpose() * Xu);
  cp.r = 1e-10 * (Xu.transpose() * xc);

  const ip::ConeResult res = ip::maximize(cp);
  if (!res.strict_interior) {
    // no strictly interior point: the feasible set collapsed to (at most) a
    // single point, e.g. equality power saturating the whole headroom
    {
      // least-squares projection of tau onto the equality set in x-space
      Eigen::MatrixXd M = Xu;
      Eigen::VectorXd x0 = xc;
      Eigen::VectorXd u = M.cols() ? Eigen::VectorXd(M.colPivHouseholderQr().solve(problem.tau - x0))
                                   : Eigen::VectorXd(0);
      Eigen::VectorXd x = x0 + (M.cols() ? Eigen::VectorXd(M * u) : Eigen::VectorXd::Zero(N));
      const double box_viol = std::max((-x).maxCoeff(), (x - problem.tau).maxCoeff());
      const double power = x.dot(problem.K * x);
      const bool power_ok = problem.power_mode == PowerMode::equality
                                ? std::fabs(power - problem.rho) <= 1e-6 * problem.rho
                                : power <= problem.rho * (1.0 + 1e-6);
      if (box_viol <= 1e-8 * (1.0 + problem.tau.maxCoeff()) && power_ok &&
          c.dot(x) >= -1e-10)
        return finish(problem, x, SolveStatus::optimal, box_viol);
    }
    return finish(problem, Eigen::VectorXd::Zero(N), SolveStatus::infeasible_direction, 0.0);
  }

  Eigen::VectorXd x = xc + Xu * res.z;
  const double kkt = ip::kkt_residual(cp, res.z);

  if (problem.power_mode == PowerMode::equality && !power_equality_row) {
    const double slack = problem.rho - x.dot(problem.K * x);
    if (slack > 1e-6 * problem.rho)
      throw PowerSlackError("solve: equality power mode but the optimum leaves slack " +
                            std::to_string(slack));
  }
  return finish(problem, x, SolveStatus::optimal, kkt);
}

}  // namespace detail

/// Maximize the panning gain lambda subject to VBAPS direction, acoustic
/// power, and headroom constraints. All three forms agree on feasible
/// problems; they differ only in how the equality structure is eliminated.
inline PanningSolution solve(const PanningProblem& problem,
                             SolveForm form = SolveForm::nullspace) {
  return detail::solve_impl(problem, form);
}

/// Drop the VBAPS constraints and maximize c'x on the acoustic power
/// boundary within the headroom box (used as the fallback for infeasible
/// steering directions). Exact support/face enumeration, exhaustive for the
/// small N used here.
inline PanningSolution solve_relaxed(const PanningProblem& problem) {
  problem.validate();
  const Eigen::Index N = problem.size();
  if (N > 12) throw std::invalid_argument("solve_relaxed: face enumeration limited to N <= 12");
  const Eigen::VectorXd c = problem.V.transpose() * problem.s;
  const detail::KRank1 kr = detail::detect_rank1(problem.K);

  if (kr.rank1) {
    // (p'x)^2 = rho: a linear program over the box with one equality
    PanningProblem sub = problem;
    sub.power_mode = PowerMode::equality;
    detail::FormModel fm;
    fm.Xmap = Eigen::MatrixXd::Identity(N, N);
    fm.obj = c;
    fm.Eq = kr.p.transpose();
    fm.eqd = Eigen::VectorXd::Constant(1, std::sqrt(problem.rho));
    const detail::Reduced red = detail::eliminate_equalities(fm.Eq, fm.eqd, static_cast<int>(N));
    ip::ConeProgram cp;
    const Eigen::MatrixXd Xu = red.F;
    const Eigen::VectorXd xc = red.z_p;
    cp.g = red.F.transpose() * c;
    cp.L.resize(2 * N, red.F.cols());
    cp.b.resize(2 * N);
    cp.L.topRows(N) = Xu;
    cp.b.head(N) = xc;
    cp.L.bottomRows(N) = -Xu;
    cp.b.tail(N) = problem.tau - xc;
    cp.R = 1e-10 * (Xu.transpose() * Xu);
    cp.r = 1e-10 * (Xu.transpose() * xc);
    const ip::ConeResult res = ip::maximize(cp);
    if (res.strict_interior) {
      const Eigen::VectorXd x = xc + Xu * res.z;
      return detail::finish(problem, x, SolveStatus::relaxed_fallback,
                            ip::kkt_residual(cp, res.z));
    }
    // the power shell may touch the box in a single point; project tau onto
    // the equality plane and accept it when feasible
    const Eigen::VectorXd x_proj =
        problem.tau + kr.p * (std::sqrt(problem.rho) - kr.p.dot(problem.tau)) / kr.p.squaredNorm();
    if (x_proj.minCoeff() >= -1e-9 && (x_proj - problem.tau).maxCoeff() <= 1e-9)
      return detail::finish(problem, x_proj, SolveStatus::relaxed_fallback, 0.0);
    return detail::finish(problem, Eigen::VectorXd::Zero(N), SolveStatus::relaxed_fallback, 0.0);
  }

  // Full-rank K: enumerate face patterns (each gain at 0, free, or tau) and
  // maximize c'x on the intersection of the power ellipsoid with the face.
  double best_obj = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  std::vector<int> pattern(N, 0);
  const long total = static_cast<long>(std::pow(3.0, static_cast<double>(N)));
  for (long code = 1; code < total; ++code) {
    long rem = code;
    for (Eigen::Index i = 0; i < N; ++i) {
      pattern[i] = static_cast<int>(rem % 3);
      rem /= 3;
    }
    std::vector<Eigen::Index> free_idx, up_idx;
    for (Eigen::Index i = 0; i < N; ++i) {
      if (pattern[i] == 1) free_idx.push_back(i);
      if (pattern[i] == 2) up_idx.push_back(i);
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
    for (auto i : up_idx) x[i] = problem.tau[i];
    const double fixed_power = x.dot(problem.K * x);

    if (free_idx.empty()) {
      if (std::fabs(fixed_power - problem.rho) > 1e-9 * problem.rho) continue;
    } else {
      const Eigen::Index F = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd KF(F, F);
      Eigen::VectorXd bF(F), cF(F);
      for (Eigen::Index i = 0; i < F; ++i) {
        cF[i] = c[free_idx[i]];
        bF[i] = x.dot(problem.K.col(free_idx[i]));
        for (Eigen::Index j = 0; j < F; ++j) KF(i, j) = problem.K(free_idx[i], free_idx[j]);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(KF);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) continue;
      // complete the square: (y + K^-1 b)' K (y + K^-1 b) = R^2
      const Eigen::VectorXd shift = ldlt.solve(bF);
      const double R2 = problem.rho - fixed_power + bF.dot(shift);
      if (R2 <= 0.0) continue;
      const double cnorm2 = cF.dot(ldlt.solve(cF));
      Eigen::VectorXd axis;
      if (cnorm2 > 1e-30) {
        axis = ldlt.solve(cF) * std::sqrt(R2 / cnorm2);
      } else {
        // objective flat on this face: any boundary point; take the first axis
        axis = Eigen::VectorXd::Zero(F);
        axis[0] = std::sqrt(R2 / KF(0, 0));
      }
      // both stationary points of the equality-constrained face problem can
      // be the sign-feasible one (the "maximizer" may leave the orthant)
      for (double sign : {1.0, -1.0}) {
        const Eigen::VectorXd y = sign * axis - shift;
        bool ok = true;
        for (Eigen::Index i = 0; i < F; ++i) {
          if (y[i] < -1e-10 || y[i] > problem.tau[free_idx[i]] + 1e-10) ok = false;
          x[free_idx[i]] = y[i];
        }
        if (!ok) continue;
        const double pw = x.dot(problem.K * x);
        if (std::fabs(pw - problem.rho) > 1e-7 * problem.rho) continue;
        const double obj = c.dot(x);
        if (obj > best_obj + 1e-12 ||
            (obj > best_obj - 1e-12 && (best.size() == 0 || x.norm() < best.norm()))) {
          best_obj = obj;
          best = x;
        }
      }
      continue;
    }
    const double obj = c.dot(x);
    if (obj > best_obj + 1e-12 ||
        (obj > best_obj - 1e-12 && (best.size() == 0 || x.norm() < best.norm()))) {
      best_obj = obj;
      best = x;
    }
  }

  if (best.size() == 0) {
    // rho unreachable anywhere in the box: report the box-clamped maximum
    Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
    for (Eigen::Index i = 0; i < N; ++i)
      if (c[i] > 0.0) x[i] = problem.tau[i];
    return detail::finish(problem, x, SolveStatus::relaxed_fallback, 0.0);
  }
  return detail::finish(problem, best, SolveStatus::relaxed_fallback, 0.0);
}

}  // namespace opse
