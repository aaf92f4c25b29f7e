#pragma once

#include <optional>
#include <string>
#include <vector>

#include "holoprop/estimators.hpp"
#include "holoprop/oracle.hpp"

namespace holoprop {

struct GridSpec {
  double re_min = -0.6, re_max = 0.6;
  double im_min = -0.6, im_max = 0.6;
  std::size_t resolution = 201;
};

// Per-cell final residual after T cold-started steps at complex beta;
// divergence is data, not an error.
struct StabilityMap {
  GridSpec grid;
  std::size_t t_steps = 200;
  RealTensor residuals;            // [resolution x resolution], +inf when diverged
  std::vector<std::uint8_t> diverged;
  Complex beta_at(std::size_t row, std::size_t col) const;
  bool cell_diverged(Complex beta) const;  // nearest cell lookup
};

StabilityMap stability_map(const Model& model, const RealTensor& x, const RealTensor& y,
                           const GridSpec& grid, std::size_t t_steps, unsigned workers = 0);

void write_stability_csv(const StabilityMap& map, const std::string& path);
// PGM rendering (dark = converged) plus a sidecar text file with grid ranges.
void write_stability_pgm(const StabilityMap& map, const std::string& pgm_path,
                         const std::string& sidecar_path);

// Fixed-point activations of selected units at every path point, plus the
// real-part series over two periods.
struct OrbitTrace {
  NudgePath path;
  std::vector<std::size_t> units;              // flat hidden-unit indices
  std::vector<std::vector<Complex>> orbit;     // [unit][k]
  std::vector<std::vector<double>> real_series;  // [unit][t], two periods
};
OrbitTrace orbit_trace(const Model& model, const RealTensor& x, const RealTensor& y,
                       const NudgePath& path, const std::vector<std::size_t>& units,
                       const SettleConfig& free_cfg, const SettleConfig& nudge_cfg);
void write_orbit_csv(const OrbitTrace& trace, const std::string& path);

enum class SweepAxis { Radii, NPoints, TOsc };

struct SweepPoint {
  double axis_value = 0.0;
  std::string estimator;
  SimilarityReport report;  // empty when the settle diverged
  bool diverged = false;
};

struct SweepResult {
  SweepAxis axis;
  std::vector<SweepPoint> points;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct SweepRequest {
  SweepAxis axis = SweepAxis::Radii;
  std::vector<double> values;
  std::vector<std::string> estimators;  // "hep" | "classic" | "classic_avg" | "online"
  std::size_t n_points = 10;            // hep path points when axis != NPoints
  double radius = 0.1;                  // when axis != Radii
  std::size_t online_periods = 10;
  std::size_t classic_realizations = 1;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::size_t oracle_t_free = 400;
};

// Similarity of each estimator against the noise-free unrolled adjoint on a
// batch of samples, one row per (estimator, axis value).
SweepResult cosine_sweep(const Model& model, const std::vector<RealTensor>& xs,
                         const std::vector<RealTensor>& ys, const SweepRequest& req,
                         const SettleConfig& free_cfg, const SettleConfig& nudge_cfg,
                         unsigned workers = 0);
void write_sweep_csv(const SweepResult& sweep, const std::vector<std::string>& param_names,
                     const std::string& path);

}  // namespace holoprop
