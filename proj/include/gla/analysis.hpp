#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gla/rng.hpp"
#include "gla/simulator.hpp"

// Calibration-error impact study: how much does a miscalibrated acquisition
// system bend the recorded gaze labels? Covers per-variable sensitivity
// curves, coupled Monte-Carlo deviation, and the linear-scaling sweep.

namespace gla {

/// Fixed desk environment for the study: camera at the origin looking at a
/// 50x30 cm screen, gaze origin pinned to the constant C = (0,0,60) cm, and
/// targets on a deterministic uniform grid (removes one variance source).
struct AnalysisEnv {
  ScreenRect screen;
  Vec3 origin{0.0, 0.0, 60.0};
  int grid_u = 21;
  int grid_v = 13;

  int n_targets() const { return grid_u * grid_v; }

  /// Grid targets as columns of a 3 x N matrix (screen plane z = 0).
  Eigen::Matrix3Xd targets() const {
    Eigen::Matrix3Xd t(3, n_targets());
    int col = 0;
    for (int i = 0; i < grid_u; ++i) {
      const double u = grid_u == 1 ? 0.5 * (screen.u_min + screen.u_max)
                                   : screen.u_min + (screen.u_max - screen.u_min) *
                                                        i / (grid_u - 1.0);
      for (int j = 0; j < grid_v; ++j) {
        const double v = grid_v == 1 ? 0.5 * (screen.v_min + screen.v_max)
                                     : screen.v_min + (screen.v_max - screen.v_min) *
                                                          j / (grid_v - 1.0);
        t.col(col++) = Vec3(u, v, 0.0);
      }
    }
    return t;
  }
};

struct SensitivityConfig {
  std::vector<double> grid_offsets{-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0,
                                   0.5,  1.0,  1.5,  2.0,  2.5,  3.0};
  int n_systems = 10000;
  double tau = 1.0;  // per-variable std: degrees for angles, cm for offsets
  double mu = 0.0;
  std::uint64_t seed = 0;
  AnalysisEnv env;
};

/// One aggregate row; `variable` is pitch/yaw/roll/x/y/z for sensitivity
/// tables and "tau" for scaling sweeps (offset then holds the tau value).
struct DeviationRow {
  std::string variable;
  double offset = 0.0;
  double mean_deg = 0.0;
  double std_deg = 0.0;
};

using DeviationTable = std::vector<DeviationRow>;

inline const std::array<std::string, 6>& calib_variable_names() {
  static const std::array<std::string, 6> names{"pitch", "yaw", "roll",
                                                "x", "y", "z"};
  return names;
}

inline CalibrationError calib_from_vector(const Eigen::Matrix<double, 6, 1>& v) {
  CalibrationError e;
  e.pitch_deg = v[0];
  e.yaw_deg = v[1];
  e.roll_deg = v[2];
  e.x_cm = v[3];
  e.y_cm = v[4];
  e.z_cm = v[5];
  return e;
}

namespace detail {

/// Per-target deviation E_g between the true and miscalibrated gaze
/// directions for one system; returns (mean, std) over the target grid.
inline std::pair<double, double> deviation_over_targets(
    const CalibrationError& err, const Eigen::Matrix3Xd& targets,
    const Vec3& origin) {
  const Extrinsics measured = perturbed_extrinsics(Extrinsics{}, err);
  double sum = 0.0, sum2 = 0.0;
  const Eigen::Index n = targets.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 t = targets.col(i);
    const UnitGaze g = gaze_direction(origin, t);
    const UnitGaze gp =
        gaze_direction(origin, measured.rotation * t + measured.translation);
    const double e = angular_error_deg(g, gp);
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
  return {mean, std::sqrt(var)};
}

}  // namespace detail

/// Per-variable sensitivity (one calibration variable set at a time, all
/// others zero), averaged over the deterministic target grid.
inline DeviationTable single_variable_sensitivity(const SensitivityConfig& cfg) {
  DeviationTable table;
  const Eigen::Matrix3Xd targets = cfg.env.targets();
  for (int var = 0; var < 6; ++var) {
    for (double offset : cfg.grid_offsets) {
      Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
      v[var] = offset;
      auto [mean, sd] =
          detail::deviation_over_targets(calib_from_vector(v), targets, cfg.env.origin);
      table.push_back({calib_variable_names()[var], offset, mean, sd});
    }
  }
  return table;
}

struct MonteCarloResult {
  double mean_deg = 0.0;  // grand mean of per-system means
  double std_deg = 0.0;   // std of per-system means across systems
};

namespace detail {

/// Unit-scale six-variable draws, one column per system. Scaling these by
/// tau (common random numbers) keeps sweep curves smooth across tau.
inline Eigen::Matrix<double, 6, Eigen::Dynamic> unit_system_draws(
    std::uint64_t seed, int n_systems) {
  Eigen::Matrix<double, 6, Eigen::Dynamic> draws(6, n_systems);
  for (int s = 0; s < n_systems; ++s) {
    Rng rng = Rng::stream(seed, {stream::kMonteCarlo, static_cast<std::uint64_t>(s)});
    for (int k = 0; k < 6; ++k) draws(k, s) = rng.normal();
  }
  return draws;
}

inline MonteCarloResult monte_carlo_with_draws(
    const SensitivityConfig& cfg, double tau,
    const Eigen::Matrix<double, 6, Eigen::Dynamic>& draws) {
  const Eigen::Matrix3Xd targets = cfg.env.targets();
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index s = 0; s < draws.cols(); ++s) {
    const Eigen::Matrix<double, 6, 1> v =
        (tau * draws.col(s)).array() + cfg.mu;
    auto [mean, sd] =
        deviation_over_targets(calib_from_vector(v), targets, cfg.env.origin);
    (void)sd;
    sum += mean;
    sum2 += mean * mean;
  }
  const double n = static_cast<double>(draws.cols());
  MonteCarloResult r;
  r.mean_deg = sum / n;
  r.std_deg = std::sqrt(std::max(0.0, sum2 / n - r.mean_deg * r.mean_deg));
  return r;
}

}  // namespace detail

/// Coupled Monte-Carlo deviation: all six variables drawn ~ N(mu, tau^2)
/// per simulated acquisition system.
inline MonteCarloResult monte_carlo_deviation(const SensitivityConfig& cfg) {
  return detail::monte_carlo_with_draws(
      cfg, cfg.tau, detail::unit_system_draws(cfg.seed, cfg.n_systems));
}

/// Scaling sweep over tau values; every tau reuses the same underlying
/// system draws so ratios reflect geometry, not sampling noise.
inline DeviationTable scaling_sweep(const std::vector<double>& taus,
                                    const SensitivityConfig& cfg) {
  DeviationTable table;
  const auto draws = detail::unit_system_draws(cfg.seed, cfg.n_systems);
  for (double tau : taus) {
    MonteCarloResult r = detail::monte_carlo_with_draws(cfg, tau, draws);
    table.push_back({"tau", tau, r.mean_deg, r.std_deg});
  }
  return table;
}

}  // namespace gla
