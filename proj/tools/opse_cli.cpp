#include <CLI11.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "opse/bench.hpp"
#include "opse/io.hpp"
#include "opse/layouts.hpp"
#include "opse/normalize.hpp"
#include "opse/opse.hpp"

namespace fs = std::filesystem;
using namespace opse;

namespace {

struct CommonOpts {
  std::string out_dir = ".";
  bool svg = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--out", opts.out_dir, "output directory for CSV/SVG reports");
  cmd->add_flag("--svg", opts.svg, "also write SVG line plots");
  cmd->add_option("--seed", opts.seed, "seed for any Monte-Carlo content");
}

void emit(const CommonOpts& opts, const std::string& stem, const CsvTable& table) {
  fs::create_directories(opts.out_dir);
  const std::string base = (fs::path(opts.out_dir) / stem).string();
  table.write_file(base + ".csv");
  if (opts.svg) write_svg_file(base + ".svg", table);
  std::cout << "wrote " << base << ".csv (" << table.rows.size() << " rows)\n";
}

Eigen::Vector2d steer_deg(double deg) {
  const double a = deg_to_rad(deg);
  return {std::cos(a), std::sin(a)};
}

Layout resolve_layout(const std::string& name, const std::string& file) {
  if (!file.empty()) return load_layout_file(file);
  return builtin_layout(name);
}

int run_solve(const std::string& layout_name, const std::string& layout_file, double steer,
              double rho, double tau, const std::string& cov, const std::string& mode) {
  const Layout layout = resolve_layout(layout_name, layout_file);
  const Eigen::Index N = static_cast<Eigen::Index>(layout.size());
  PanningProblem p;
  p.V = layout_directions(layout);
  p.s = steer_deg(steer);
  if (cov == "anechoic")
    p.K = Eigen::MatrixXd::Ones(N, N);
  else if (cov == "diffuse")
    p.K = Eigen::MatrixXd::Identity(N, N);
  else
    throw std::invalid_argument("--cov must be 'anechoic' or 'diffuse'");
  p.rho = rho;
  p.tau = Eigen::VectorXd::Constant(N, tau);
  if (mode == "equality")
    p.power_mode = PowerMode::equality;
  else if (mode != "inequality")
    throw std::invalid_argument("--mode must be 'equality' or 'inequality'");

  auto sol = solve(p);
  bool relaxed = false;
  if (sol.status == SolveStatus::infeasible_direction) {
    sol = solve_relaxed(p);
    relaxed = true;
  }
  nlohmann::json j;
  j["status"] = relaxed ? "relaxed_fallback"
                        : (sol.status == SolveStatus::optimal ? "optimal" : "infeasible");
  j["x"] = std::vector<double>(sol.x.data(), sol.x.data() + sol.x.size());
  j["lambda"] = sol.lambda;
  j["sensitivity"] = sol.sensitivity;
  j["efficiency_electric"] = sol.efficiency_electric;
  j["efficiency_acoustic"] = sol.efficiency_acoustic;
  j["kkt_residual"] = sol.kkt_residual;
  std::cout << j.dump(2) << '\n';
  if (!relaxed && sol.status != SolveStatus::optimal) return 3;
  return 0;
}

int run_normalize(const CommonOpts& opts, const std::string& layout_file, double window_fwhm_deg,
                  double critical_distance, double gamma, double ref_distance) {
  const Layout layout = load_layout_file(layout_file);
  const ReferenceDirectivity dir;
  std::vector<CircularDistribution> windows;
  for (const auto& spk : layout.speakers)
    windows.emplace_back(normalization_angle(spk, Vec2::Zero()),
                         fwhm_to_ell(deg_to_rad(window_fwhm_deg)));
  double D = ref_distance;
  if (D <= 0.0)
    for (const auto& spk : layout.speakers) D = std::max(D, spk.distance());
  const DistanceModel model(critical_distance, gamma, D);

  std::vector<double> grid;
  for (int i = 0; i < 128; ++i) grid.push_back(100.0 + (10000.0 - 100.0) * i / 127.0);
  const auto result = build_normalization(layout, dir, windows, model, grid);

  CsvTable t;
  t.header = {"freq_hz"};
  for (std::size_t n = 0; n < layout.size(); ++n) {
    t.header.push_back("g_mag_" + std::to_string(n));
    t.header.push_back("headroom_" + std::to_string(n));
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> row = {grid[i]};
    for (std::size_t n = 0; n < layout.size(); ++n) {
      row.push_back(std::abs(result.filters[n].response(grid[i])));
      row.push_back(result.headroom[n][i]);
    }
    t.rows.push_back(std::move(row));
  }
  emit(opts, "normalize", t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loudspeaker normalization and panning-gain optimization reports"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* center = app.add_subcommand("center-dist", "center-channel distribution vs. power target");
  bench::CenterDistributionConfig center_cfg;
  std::string center_mode = "equality";
  add_common(center, opts);
  center->add_option("--rho-start", center_cfg.rho_start);
  center->add_option("--rho-stop", center_cfg.rho_stop);
  center->add_option("--rho-step", center_cfg.rho_step);
  center->add_option("--mode", center_mode, "power constraint: equality | inequality");

  auto* diffuse = app.add_subcommand("diffuse-sweep", "correlated-to-diffuse mixture sweep");
  bench::DiffuseSweepConfig diffuse_cfg;
  add_common(diffuse, opts);
  diffuse->add_option("--alpha-step", diffuse_cfg.alpha_step);

  auto* circular = app.add_subcommand("circular-sweep", "steering sweep over a builtin layout");
  bench::CircularSweepConfig circ_cfg;
  std::string circ_cov = "both";
  add_common(circular, opts);
  circular->add_option("--layout", circ_cfg.layout, "builtin layout name");
  circular->add_option("--start", circ_cfg.start_deg);
  circular->add_option("--stop", circ_cfg.stop_deg);
  circular->add_option("--step", circ_cfg.step_deg);
  circular->add_option("--rho", circ_cfg.rho);
  circular->add_option("--tau", circ_cfg.tau);
  circular->add_option("--cov", circ_cov, "anechoic | diffuse | both");

  auto* bayes = app.add_subcommand("bayes-demo", "sequential angle-calibration walk-through");
  add_common(bayes, opts);

  auto* normalize = app.add_subcommand("normalize", "build normalization filters for a layout file");
  std::string norm_layout_file;
  double norm_fwhm = 90.22, norm_dc = 1e9, norm_gamma = 0.0, norm_ref = 0.0;
  add_common(normalize, opts);
  normalize->add_option("--layout-file", norm_layout_file, "layout JSON")->required();
  normalize->add_option("--window-fwhm", norm_fwhm, "listener window FWHM, degrees");
  normalize->add_option("--critical-distance", norm_dc);
  normalize->add_option("--gamma", norm_gamma, "decay dB per double-distance, [-6, 0]");
  normalize->add_option("--ref-distance", norm_ref, "0 = farthest speaker");

  auto* solve_cmd = app.add_subcommand("solve", "solve a single panning problem");
  std::string solve_layout = "itu_5_0", solve_layout_file, solve_cov = "anechoic",
              solve_mode = "inequality";
  double solve_steer = 0.0, solve_rho = 1.0, solve_tau = 1.0;
  solve_cmd->add_option("--layout", solve_layout, "builtin layout name");
  solve_cmd->add_option("--layout-file", solve_layout_file, "layout JSON");
  solve_cmd->add_option("--steer", solve_steer, "steering azimuth, degrees");
  solve_cmd->add_option("--rho", solve_rho, "acoustic power target");
  solve_cmd->add_option("--tau", solve_tau, "per-speaker headroom bound");
  solve_cmd->add_option("--cov", solve_cov, "anechoic | diffuse");
  solve_cmd->add_option("--mode", solve_mode, "equality | inequality");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*center) {
      if (center_mode == "inequality")
        center_cfg.power_mode = PowerMode::inequality;
      else if (center_mode != "equality")
        throw std::invalid_argument("--mode must be 'equality' or 'inequality'");
      emit(opts, "center_dist", bench::run_center_distribution(center_cfg));
    } else if (*diffuse) {
      const auto result = bench::run_diffuse_sweep(diffuse_cfg);
      emit(opts, "diffuse_sweep", result.table);
      std::cout << "alpha_star=" << format_double(result.alpha_star)
                << " rayleigh_gap_at_1=" << format_double(result.rayleigh_gap_at_1) << '\n';
    } else if (*circular) {
      std::vector<bench::CovarianceKind> kinds;
      if (circ_cov == "both")
        kinds = {bench::CovarianceKind::anechoic, bench::CovarianceKind::diffuse};
      else if (circ_cov == "anechoic")
        kinds = {bench::CovarianceKind::anechoic};
      else if (circ_cov == "diffuse")
        kinds = {bench::CovarianceKind::diffuse};
      else
        throw std::invalid_argument("--cov must be 'anechoic', 'diffuse' or 'both'");
      for (auto kind : kinds)
        emit(opts, "circular_" + circ_cfg.layout + "_" + bench::covariance_name(kind),
             bench::run_circular_sweep(circ_cfg, kind));
    } else if (*bayes) {
      const auto result = bench::run_bayes_walkthrough();
      emit(opts, "bayes_posteriors", result.posterior_table);
      emit(opts, "bayes_quotients", result.quotient_table);
    } else if (*normalize) {
      return run_normalize(opts, norm_layout_file, norm_fwhm, norm_dc, norm_gamma, norm_ref);
    } else if (*solve_cmd) {
      return run_solve(solve_layout, solve_layout_file, solve_steer, solve_rho, solve_tau,
                       solve_cov, solve_mode);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
