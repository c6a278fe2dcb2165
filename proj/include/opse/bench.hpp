#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "opse/circular.hpp"
#include "opse/io.hpp"
#include "opse/layouts.hpp"
#include "opse/normalize.hpp"
#include "opse/opse.hpp"

namespace opse::bench {

inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OPSE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Index-parallel loop; each worker takes a contiguous slice so results can
/// be written into preallocated slots and assembled in order.
template <class F>
void parallel_for(std::size_t count, F&& body) {
  const unsigned workers = std::min<std::size_t>(thread_count(), count ? count : 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  for (auto& t : pool) t.join();
}

inline Eigen::Matrix2Xd steering(double deg) {
  Eigen::Matrix2Xd s(2, 1);
  const double a = deg_to_rad(deg);
  s.col(0) << std::cos(a), std::sin(a);
  return s;
}

// ---------------------------------------------------------------------------
// Center-channel distribution across the acoustic power sweep.

struct CenterDistributionConfig {
  double rho_start = 0.25;
  double rho_stop = 25.0;
  double rho_step = 0.25;
  PowerMode power_mode = PowerMode::equality;
};

inline CsvTable run_center_distribution(const CenterDistributionConfig& cfg = {}) {
  if (!(cfg.rho_step > 0.0) || !(cfg.rho_stop >= cfg.rho_start) || !(cfg.rho_start > 0.0))
    throw std::invalid_argument("center-dist: bad rho sweep");
  const Layout layout = builtin_layout("itu_5_0");
  PanningProblem p;
  p.V = layout_directions(layout);
  p.s = steering(0.0).col(0);
  p.K = Eigen::MatrixXd::Ones(5, 5);
  p.tau = Eigen::VectorXd::Ones(5);
  p.power_mode = cfg.power_mode;

  const std::size_t rows =
      static_cast<std::size_t>(std::floor((cfg.rho_stop - cfg.rho_start) / cfg.rho_step + 1e-9)) +
      1;
  CsvTable t;
  t.header = {"rho",         "x_c",         "x_l",
              "x_r",         "x_sl",        "x_sr",
              "sensitivity", "eff_electric", "eff_acoustic"};
  t.rows.resize(rows);
  parallel_for(rows, [&](std::size_t i) {
    PanningProblem q = p;
    q.rho = cfg.rho_start + static_cast<double>(i) * cfg.rho_step;
    const auto sol = solve(q);
    t.rows[i] = {q.rho,
                 sol.x[0],
                 sol.x[1],
                 sol.x[2],
                 sol.x[3],
                 sol.x[4],
                 sol.sensitivity,
                 sol.efficiency_electric,
                 sol.efficiency_acoustic};
  });
  return t;
}

// ---------------------------------------------------------------------------
// Correlated-to-diffuse mixture sweep on the frontal triple.

struct DiffuseSweepConfig {
  double alpha_step = 0.005;
  double tau = 10.0;
};

struct DiffuseSweepResult {
  CsvTable table;  ///< alpha, gains, efficiencies, rayleigh_gap
  double alpha_star = 0.0;      ///< first L/R activation
  double rayleigh_gap_at_1 = 0.0;
};

namespace detail {

inline Eigen::MatrixXd mixture_identity(double alpha, Eigen::Index n) {
  return (1.0 - alpha) * Eigen::MatrixXd::Ones(n, n) + alpha * Eigen::MatrixXd::Identity(n, n);
}

inline double rayleigh_bound(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& K) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(
      gram, K + 1e-12 * Eigen::MatrixXd::Identity(K.rows(), K.cols()));
  return es.eigenvalues().maxCoeff();
}

}  // namespace detail

inline DiffuseSweepResult run_diffuse_sweep(const DiffuseSweepConfig& cfg = {}) {
  if (!(cfg.alpha_step > 0.0)) throw std::invalid_argument("diffuse-sweep: bad alpha step");
  const Layout layout = builtin_layout("itu_3_0");
  PanningProblem base;
  base.V = layout_directions(layout);
  base.s = steering(0.0).col(0);
  base.rho = 1.0;
  base.tau = Eigen::VectorXd::Constant(3, cfg.tau);
  base.power_mode = PowerMode::equality;
  const Eigen::MatrixXd gram = base.V.transpose() * base.V;

  auto solve_at = [&](double alpha) {
    PanningProblem p = base;
    p.K = detail::mixture_identity(alpha, 3);
    return solve(p);
  };

  const std::size_t rows = static_cast<std::size_t>(std::floor(1.0 / cfg.alpha_step + 1e-9)) + 1;
  DiffuseSweepResult out;
  out.table.header = {"alpha", "x_c", "x_l", "x_r", "eff_electric", "eff_acoustic",
                      "rayleigh_gap"};
  out.table.rows.resize(rows);
  parallel_for(rows, [&](std::size_t i) {
    const double alpha = std::min(1.0, static_cast<double>(i) * cfg.alpha_step);
    const auto sol = solve_at(alpha);
    const double gap =
        detail::rayleigh_bound(gram, detail::mixture_identity(alpha, 3)) - sol.efficiency_acoustic;
    out.table.rows[i] = {alpha,
                        sol.x[0],
                        sol.x[1],
                        sol.x[2],
                        sol.efficiency_electric,
                        sol.efficiency_acoustic,
                        gap};
  });
  out.rayleigh_gap_at_1 = out.table.rows.back()[6];

  // the L/R gains grow continuously from zero at the activation threshold,
  // so bisection on a small cutoff locates it
  double lo = 0.0, hi = 1.0;
  auto active = [&](double alpha) { return solve_at(alpha).x[1] > 1e-5; };
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (active(mid) ? hi : lo) = mid;
  }
  out.alpha_star = 0.5 * (lo + hi);
  return out;
}

// ---------------------------------------------------------------------------
// Circular steering sweep over a builtin layout.

enum class CovarianceKind { anechoic, diffuse };

inline std::string covariance_name(CovarianceKind k) {
  return k == CovarianceKind::anechoic ? "anechoic" : "diffuse";
}

struct CircularSweepConfig {
  std::string layout = "itu_5_0";
  double start_deg = 0.0;
  double stop_deg = 180.0;
  double step_deg = 1.0;
  double rho = 1.0;
  double tau = 10.0;
};

inline constexpr double kActiveGainThreshold = 1e-6;

inline CsvTable run_circular_sweep(const CircularSweepConfig& cfg, CovarianceKind kind) {
  if (!(cfg.step_deg > 0.0) || !(cfg.stop_deg >= cfg.start_deg))
    throw std::invalid_argument("circular-sweep: bad steering sweep");
  const Layout layout = builtin_layout(cfg.layout);
  const Eigen::Index N = static_cast<Eigen::Index>(layout.size());
  PanningProblem base;
  base.V = layout_directions(layout);
  base.K = kind == CovarianceKind::anechoic ? Eigen::MatrixXd(Eigen::MatrixXd::Ones(N, N))
                                            : Eigen::MatrixXd(Eigen::MatrixXd::Identity(N, N));
  base.rho = cfg.rho;
  base.tau = Eigen::VectorXd::Constant(N, cfg.tau);

  const std::size_t rows =
      static_cast<std::size_t>(std::floor((cfg.stop_deg - cfg.start_deg) / cfg.step_deg + 1e-9)) +
      1;
  CsvTable t;
  t.header = {"theta_deg", "sensitivity", "active_count", "feasible"};
  for (Eigen::Index n = 0; n < N; ++n) t.header.push_back("x_" + std::to_string(n));
  t.rows.resize(rows);
  parallel_for(rows, [&](std::size_t i) {
    const double theta = cfg.start_deg + static_cast<double>(i) * cfg.step_deg;
    PanningProblem p = base;
    p.s = steering(theta).col(0);
    auto sol = solve(p);
    double feasible = 1.0;
    if (sol.status == SolveStatus::infeasible_direction) {
      sol = solve_relaxed(p);
      feasible = 0.0;
    }
    double active = 0.0;
    for (Eigen::Index n = 0; n < N; ++n)
      if (sol.x[n] > kActiveGainThreshold) active += 1.0;
    std::vector<double> row = {theta, sol.sensitivity, active, feasible};
    for (Eigen::Index n = 0; n < N; ++n) row.push_back(sol.x[n]);
    t.rows[i] = std::move(row);
  });
  return t;
}

// ---------------------------------------------------------------------------
// Step-through of the sequential angle calibration.

struct BayesStep {
  double measured_deg = 0.0;
  double measured_fwhm_deg = 0.0;
  CircularDistribution prior{0.0, 1.0};
  CircularDistribution posterior{0.0, 1.0};
};

struct BayesWalkthroughConfig {
  std::vector<std::pair<double, double>> measurements = {
      {-60.0, 90.0}, {75.0, 45.0}, {90.0, 30.0}};  ///< (angle, FWHM) in degrees
  double freq_start = 100.0;
  double freq_stop = 10000.0;
  std::size_t freq_points = 200;
};

struct BayesWalkthroughResult {
  std::vector<BayesStep> steps;
  CsvTable posterior_table;  ///< step, measured, posterior mean / fwhm
  CsvTable quotient_table;   ///< freq_hz, |Q| per step (step 0 = prior)
};

inline BayesWalkthroughResult run_bayes_walkthrough(const BayesWalkthroughConfig& cfg = {}) {
  if (cfg.freq_points < 2 || !(cfg.freq_stop > cfg.freq_start))
    throw std::invalid_argument("bayes-demo: bad frequency grid");
  const ReferenceDirectivity dir;
  const CircularDistribution axial(0.0, fwhm_to_ell(deg_to_rad(60.0)));

  BayesWalkthroughResult out;
  CircularDistribution belief(0.0, fwhm_to_ell(deg_to_rad(90.22)));
  std::vector<CircularDistribution> windows = {belief};
  out.posterior_table.header = {"step", "measured_deg", "measured_fwhm_deg", "posterior_mean_deg",
                                "posterior_fwhm_deg"};
  out.posterior_table.rows.push_back(
      {0.0, 0.0, 0.0, rad_to_deg(belief.mu), rad_to_deg(ell_to_fwhm(belief.ell))});
  for (std::size_t k = 0; k < cfg.measurements.size(); ++k) {
    const auto [deg, fwhm] = cfg.measurements[k];
    const AngleMeasurement meas(deg_to_rad(deg), fwhm_to_ell(deg_to_rad(fwhm)));
    belief = bayes_update(belief, meas);
    windows.push_back(belief);
    BayesStep step;
    step.measured_deg = deg;
    step.measured_fwhm_deg = fwhm;
    step.prior = windows[k];
    step.posterior = belief;
    out.steps.push_back(step);
    out.posterior_table.rows.push_back({static_cast<double>(k + 1), deg, fwhm,
                                        rad_to_deg(belief.mu),
                                        rad_to_deg(ell_to_fwhm(belief.ell))});
  }

  out.quotient_table.header = {"freq_hz"};
  for (std::size_t k = 0; k < windows.size(); ++k)
    out.quotient_table.header.push_back("q_step" + std::to_string(k));
  out.quotient_table.rows.resize(cfg.freq_points);
  parallel_for(cfg.freq_points, [&](std::size_t i) {
    const double nu = cfg.freq_start + (cfg.freq_stop - cfg.freq_start) *
                                           static_cast<double>(i) /
                                           static_cast<double>(cfg.freq_points - 1);
    std::vector<double> row = {nu};
    for (const auto& win : windows) row.push_back(quotient_power(dir, axial, win, nu));
    out.quotient_table.rows[i] = std::move(row);
  });
  return out;
}

}  // namespace opse::bench
