#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "opse/math.hpp"
#include "opse/opse.hpp"

using namespace opse;
using Catch::Approx;

namespace {

Eigen::Matrix2Xd dirs(const std::vector<double>& degs) {
  Eigen::Matrix2Xd V(2, degs.size());
  for (std::size_t i = 0; i < degs.size(); ++i) {
    const double a = deg_to_rad(degs[i]);
    V.col(i) << std::cos(a), std::sin(a);
  }
  return V;
}

Eigen::Vector2d steer(double deg) {
  return {std::cos(deg_to_rad(deg)), std::sin(deg_to_rad(deg))};
}

PanningProblem itu50(double rho, PowerMode mode = PowerMode::inequality) {
  PanningProblem p;
  p.V = dirs({0.0, -30.0, 30.0, -110.0, 110.0});
  p.s = steer(0.0);
  p.K = Eigen::MatrixXd::Ones(5, 5);
  p.rho = rho;
  p.tau = Eigen::VectorXd::Ones(5);
  p.power_mode = mode;
  return p;
}

PanningProblem random_feasible(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> un(2, 8);
  std::uniform_real_distribution<double> uang(-180.0, 180.0), ut(0.5, 2.0), ur(0.5, 4.0),
      u01(0.0, 1.0);
  for (;;) {
    const int N = un(rng);
    std::vector<double> degs;
    for (int i = 0; i < N; ++i) degs.push_back(uang(rng));
    // keep the geometry generic: no near-coincident speakers
    bool ok = true;
    for (int i = 0; i < N && ok; ++i)
      for (int j = i + 1; j < N; ++j)
        if (std::fabs(wrap_angle(deg_to_rad(degs[i] - degs[j]))) < deg_to_rad(5.0)) ok = false;
    if (!ok) continue;
    PanningProblem p;
    p.V = dirs(degs);
    const double sd = uang(rng);
    p.s = steer(sd);
    // avoid steering too close to a speaker (the vertex case is tested separately)
    for (int i = 0; i < N && ok; ++i)
      if (std::fabs(wrap_angle(deg_to_rad(sd - degs[i]))) < deg_to_rad(2.0)) ok = false;
    if (!ok || feasibility(p.V, p.s) != Feasibility::feasible) continue;
    Eigen::MatrixXd A(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) A(i, j) = 2.0 * u01(rng) - 1.0;
    p.K = A * A.transpose() / N + 0.1 * Eigen::MatrixXd::Identity(N, N);
    p.rho = ur(rng);
    p.tau = Eigen::VectorXd::NullaryExpr(N, [&](Eigen::Index) { return ut(rng); });
    return p;
  }
}

/// Exhaustive multiresolution grid search in the VBAPS kernel coordinates.
Eigen::VectorXd grid_oracle(const PanningProblem& p) {
  const auto ns = nullspace_basis(p.V, p.s, p.K);
  const int m = static_cast<int>(ns.basis.cols());
  REQUIRE(m <= 3);
  const double range = p.tau.norm();
  const Eigen::VectorXd c = p.V.transpose() * p.s;

  // radially project onto the power shell before checking feasibility:
  // the scaling keeps the kernel subspace and, because it only shrinks the
  // gains, the box as well.  Without it an axis-aligned lattice cannot walk
  // along the curved shell where the objective gradient points outward.
  auto project = [&](Eigen::VectorXd& y) {
    const Eigen::VectorXd x = ns.basis * y;
    const double pow = x.dot(p.K * x);
    if (pow > p.rho) y *= std::sqrt(p.rho / pow);
  };
  auto value = [&](const Eigen::VectorXd& y, double eps) {
    const Eigen::VectorXd x = ns.basis * y;
    if ((x.array() < -eps).any() || ((x - p.tau).array() > eps).any())
      return -std::numeric_limits<double>::infinity();
    const double v = c.dot(x);
    return v < -eps ? -std::numeric_limits<double>::infinity() : v;
  };

  Eigen::VectorXd center = Eigen::VectorXd::Zero(m);
  double step = range / 40.0;
  bool first = true;
  for (int iter = 0; iter < 120 && step > 1e-8 * range; ++iter) {
    const int half = first ? 40 : 8;
    const double eps = step * 1e-3 + 1e-9;
    double best = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_y = center;
    bool at_edge = false;
    std::vector<int> idx(m, -half);
    for (;;) {
      Eigen::VectorXd y = center;
      for (int k = 0; k < m; ++k) y[k] += idx[k] * step;
      project(y);
      const double v = value(y, eps);
      if (v > best) {
        best = v;
        best_y = y;
        at_edge = false;
        for (int k = 0; k < m; ++k)
          if (std::abs(idx[k]) == half) at_edge = true;
      }
      int k = 0;
      while (k < m && ++idx[k] > half) idx[k++] = -half;
      if (k == m) break;
    }
    center = best_y;
    // keep walking at the same resolution while the optimum sits on the
    // window edge, refine once it is interior
    if (!at_edge) step /= 2.0;
    first = false;
  }
  return ns.basis * center;
}

}  // namespace

TEST_CASE("feasibility of steering directions") {
  const auto stereo = dirs({-30.0, 30.0});
  CHECK(feasibility(stereo, steer(0.0)) == Feasibility::feasible);
  CHECK(feasibility(stereo, steer(29.0)) == Feasibility::feasible);
  CHECK(feasibility(stereo, steer(180.0)) == Feasibility::infeasible);
  CHECK(feasibility(stereo, steer(90.0)) == Feasibility::infeasible);

  const auto pentagon = dirs({90.0, 162.0, 234.0, 306.0, 18.0});
  for (int d = -180; d <= 180; ++d)
    CHECK(feasibility(pentagon, steer(d)) == Feasibility::feasible);

  CHECK_THROWS_AS(feasibility(Eigen::Matrix2Xd(2, 0), steer(0.0)), std::invalid_argument);
}

TEST_CASE("single aligned speaker") {
  PanningProblem p;
  p.V = dirs({0.0});
  p.s = steer(0.0);
  p.K = Eigen::MatrixXd::Ones(1, 1);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Ones(1);
  for (auto form : {SolveForm::augmented, SolveForm::primary}) {
    const auto sol = solve(p, form);
    CHECK(sol.status == SolveStatus::optimal);
    CHECK(sol.x[0] == Approx(1.0).margin(1e-8));
    CHECK(sol.lambda == Approx(1.0).margin(1e-8));
    CHECK(sol.sensitivity == Approx(1.0).margin(1e-8));
  }
  CHECK_THROWS_AS(solve(p, SolveForm::nullspace), std::invalid_argument);

  // relaxed solution coincides when VBAPS is inactive at the optimum
  const auto rel = solve_relaxed(p);
  CHECK(rel.status == SolveStatus::relaxed_fallback);
  CHECK(rel.x[0] == Approx(1.0).margin(1e-8));
}

TEST_CASE("distributed center: frontal triple at rho = 9") {
  const auto p = itu50(9.0);
  for (auto form : {SolveForm::augmented, SolveForm::primary, SolveForm::nullspace}) {
    const auto sol = solve(p, form);
    REQUIRE(sol.status == SolveStatus::optimal);
    Eigen::VectorXd want(5);
    want << 1.0, 1.0, 1.0, 0.0, 0.0;
    CHECK((sol.x - want).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(sol.lambda == Approx(1.0 + std::sqrt(3.0)).margin(1e-6));
    CHECK(sol.sensitivity == Approx((1.0 + std::sqrt(3.0)) / 3.0).margin(1e-6));
  }
}

TEST_CASE("distributed center: surrounds engage at rho = 25 under equality power") {
  const auto p = itu50(25.0, PowerMode::equality);
  for (auto form : {SolveForm::augmented, SolveForm::primary, SolveForm::nullspace}) {
    const auto sol = solve(p, form);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK((sol.x - Eigen::VectorXd::Ones(5)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(sol.x.dot(p.K * sol.x) == Approx(25.0).epsilon(1e-6));
  }
}

TEST_CASE("infeasible steering returns the zero solution") {
  PanningProblem p;
  p.V = dirs({-30.0, 30.0});
  p.s = steer(180.0);
  p.K = Eigen::MatrixXd::Identity(2, 2);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Constant(2, 10.0);
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::infeasible_direction);
  CHECK(sol.x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("steering at a layout vertex uses only the aligned speaker") {
  PanningProblem p;
  p.V = dirs({-30.0, 30.0});
  p.s = steer(30.0);
  p.K = Eigen::MatrixXd::Identity(2, 2);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Ones(2);
  for (auto form : {SolveForm::augmented, SolveForm::primary, SolveForm::nullspace}) {
    const auto sol = solve(p, form);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.x[0] == Approx(0.0).margin(1e-9));
    CHECK(sol.x[1] == Approx(1.0).margin(1e-7));
    CHECK(sol.sensitivity == Approx(1.0).margin(1e-7));
  }
}

TEST_CASE("three forms agree on random feasible problems") {
  std::mt19937_64 rng(42);
  int checked = 0;
  while (checked < 200) {
    const auto p = random_feasible(rng);
    const auto sa = solve(p, SolveForm::augmented);
    const auto sp = solve(p, SolveForm::primary);
    const auto sn = solve(p, SolveForm::nullspace);
    REQUIRE(sa.status == SolveStatus::optimal);
    REQUIRE(sp.status == SolveStatus::optimal);
    REQUIRE(sn.status == SolveStatus::optimal);
    CHECK((sa.x - sp.x).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((sa.x - sn.x).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(sa.lambda == Approx(sn.lambda).margin(1e-7));
    CHECK(sa.kkt_residual < 1e-8);

    // lambda elimination identity: Vx = lambda s at the solution
    CHECK((p.V * sn.x - sn.lambda * p.s).norm() < 1e-8);
    // solution invariants
    CHECK(sn.x.minCoeff() > -1e-8);
    CHECK((sn.x - p.tau).maxCoeff() < 1e-8);
    CHECK(sn.x.dot(p.K * sn.x) <= p.rho * (1.0 + 1e-6));
    CHECK(sn.sensitivity > 0.0);
    CHECK(sn.sensitivity <= 1.0 + 1e-9);
    ++checked;
  }
}

TEST_CASE("solver matches a brute-force kernel grid search for small N") {
  std::mt19937_64 rng(7);
  int checked = 0;
  while (checked < 10) {
    auto p = random_feasible(rng);
    if (p.size() > 4) continue;
    const auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    const Eigen::VectorXd ref = grid_oracle(p);
    CHECK((sol.x - ref).cwiseAbs().maxCoeff() < 2e-3);
    ++checked;
  }
}

TEST_CASE("metric examples") {
  // all speakers coincident with s
  Eigen::Matrix2Xd V(2, 3);
  V.col(0) = V.col(1) = V.col(2) = steer(40.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  const auto m = metrics(x, V, steer(40.0), Eigen::MatrixXd::Identity(3, 3));
  CHECK(m.sensitivity == Approx(1.0));
  CHECK(m.efficiency_electric == Approx(3.0));

  // antipodal pair sums to zero
  const auto m2 = metrics(Eigen::VectorXd::Ones(2), dirs({10.0, 190.0}), steer(10.0),
                          Eigen::MatrixXd::Identity(2, 2));
  CHECK(std::fabs(m2.sensitivity) < 1e-12);

  CHECK_THROWS_AS(metrics(Eigen::VectorXd::Zero(2), dirs({0.0, 90.0}), steer(0.0),
                          Eigen::MatrixXd::Identity(2, 2)),
                  UndefinedMetricsError);
}

TEST_CASE("acoustic efficiency respects the generalized Rayleigh bound") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u01(0.0, 1.0), uang(-180.0, 180.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int N = 2 + static_cast<int>(u01(rng) * 5);
    std::vector<double> degs;
    for (int i = 0; i < N; ++i) degs.push_back(uang(rng));
    const auto V = dirs(degs);
    Eigen::MatrixXd A(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) A(i, j) = 2.0 * u01(rng) - 1.0;
    const Eigen::MatrixXd K = A * A.transpose() + 0.05 * Eigen::MatrixXd::Identity(N, N);
    Eigen::VectorXd x(N);
    for (int i = 0; i < N; ++i) x[i] = u01(rng) + 1e-3;

    const auto m = metrics(x, V, steer(uang(rng)), K);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        Eigen::MatrixXd(V.transpose() * V), K);
    CHECK(m.efficiency_acoustic <= ges.eigenvalues().maxCoeff() + 1e-8);
    CHECK(m.efficiency_electric <= N + 1e-12);
  }
}

TEST_CASE("nullspace basis structure") {
  const auto V = dirs({0.0, -30.0, 30.0, -110.0, 110.0});
  const auto ns = nullspace_basis(V, steer(0.0), Eigen::MatrixXd::Identity(5, 5));
  CHECK(ns.basis.cols() == 4);
  CHECK(!ns.degenerate);
  CHECK((ns.basis.transpose() * ns.basis - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-12);
  const Eigen::MatrixXd A =
      (Eigen::Matrix2d::Identity() - steer(0.0) * steer(0.0).transpose()) * V;
  CHECK((A * ns.basis).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ns.K_reduced.rows() == 4);

  // all columns equal to s: A = 0, nullity N, degenerate
  Eigen::Matrix2Xd Vs(2, 3);
  Vs.col(0) = Vs.col(1) = Vs.col(2) = steer(25.0);
  const auto deg = nullspace_basis(Vs, steer(25.0));
  CHECK(deg.degenerate);
  CHECK(deg.basis.cols() == 3);

  // N = 2 generic pair: one-dimensional kernel
  CHECK(nullspace_basis(dirs({-30.0, 30.0}), steer(10.0)).basis.cols() == 1);
}

TEST_CASE("diffuse-field optimum reaches the Rayleigh bound") {
  PanningProblem p;
  p.V = dirs({0.0, -30.0, 30.0});
  p.s = steer(0.0);
  p.K = Eigen::MatrixXd::Identity(3, 3);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Constant(3, 1e3);
  const auto sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(p.V.transpose() * p.V));
  const double bound = es.eigenvalues().maxCoeff();
  CHECK(bound == Approx(1.0 + 2.0 * std::pow(std::cos(deg_to_rad(30.0)), 2)));
  CHECK(sol.efficiency_acoustic == Approx(bound).margin(1e-4));
  CHECK(sol.efficiency_electric == Approx(bound).margin(1e-4));
}

TEST_CASE("sensitivity decreases monotonically in the power target") {
  double prev = 2.0;
  for (double rho : {1.0, 4.0, 9.0, 16.0, 25.0}) {
    const auto sol = solve(itu50(rho, PowerMode::equality));
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.sensitivity <= prev + 1e-9);
    prev = sol.sensitivity;
  }
}

TEST_CASE("consistent scaling of headroom and power leaves sensitivity invariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_feasible(rng);
    const auto sol = solve(p);
    auto q = p;
    const double beta = 2.5;
    q.tau *= beta;
    q.rho *= beta * beta;
    const auto sol2 = solve(q);
    CHECK((sol2.x - beta * sol.x).cwiseAbs().maxCoeff() < 1e-5 * beta);
    CHECK(sol2.sensitivity == Approx(sol.sensitivity).margin(1e-7));
  }
}

TEST_CASE("relaxed solve lands on the power boundary for reversed steering") {
  PanningProblem p;
  p.V = dirs({-30.0, 30.0});
  p.s = steer(180.0);
  p.K = Eigen::MatrixXd::Identity(2, 2);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Constant(2, 10.0);
  const auto sol = solve_relaxed(p);
  CHECK(sol.status == SolveStatus::relaxed_fallback);
  // analytic KKT: minimize x1 + x2 on the quarter circle -> a single corner
  CHECK(sol.x.dot(sol.x) == Approx(1.0).margin(1e-9));
  CHECK(sol.x.minCoeff() == Approx(0.0).margin(1e-9));
  CHECK(sol.sensitivity == Approx(-std::cos(deg_to_rad(30.0))).margin(1e-9));
}

TEST_CASE("relaxed sensitivity decreases continuously past the feasibility edge") {
  PanningProblem p;
  p.V = dirs({0.0, -30.0, 30.0});
  p.K = Eigen::MatrixXd::Ones(3, 3);  // anechoic rank-1
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Ones(3);
  double prev = 2.0;
  for (double deg = 35.0; deg <= 150.0; deg += 5.0) {
    p.s = steer(deg);
    REQUIRE(feasibility(p.V, p.s) == Feasibility::infeasible);
    const auto sol = solve_relaxed(p);
    CHECK(sol.sensitivity < prev + 1e-6);
    prev = sol.sensitivity;
  }
}

TEST_CASE("equality power with unreachable target raises") {
  PanningProblem p;
  p.V = dirs({-30.0, 30.0});
  p.s = steer(0.0);
  p.K = Eigen::MatrixXd::Identity(2, 2);
  p.rho = 10.0;  // max reachable power is tau'tau = 2
  p.tau = Eigen::VectorXd::Ones(2);
  p.power_mode = PowerMode::equality;
  CHECK_THROWS_AS(solve(p), PowerSlackError);
}

TEST_CASE("problem validation") {
  PanningProblem p;
  p.V = dirs({-30.0, 30.0});
  p.s = steer(0.0);
  p.K = Eigen::MatrixXd::Identity(2, 2);
  p.rho = 1.0;
  p.tau = Eigen::VectorXd::Ones(2);

  auto bad = p;
  bad.V.col(0) *= 2.0;
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
  bad = p;
  bad.s << 1.0, 1.0;
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
  bad = p;
  bad.K(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
  bad = p;
  bad.K << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
  bad = p;
  bad.rho = 0.0;
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
  bad = p;
  bad.tau[1] = 0.0;
  CHECK_THROWS_AS(solve(bad), std::invalid_argument);
}
