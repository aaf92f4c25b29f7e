#include "holoprop/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "holoprop/io.hpp"
#include "holoprop/parallel.hpp"

namespace holoprop {

Complex StabilityMap::beta_at(std::size_t row, std::size_t col) const {
  const double re = grid.re_min + (grid.re_max - grid.re_min) * static_cast<double>(col) /
                                      static_cast<double>(grid.resolution - 1);
  const double im = grid.im_min + (grid.im_max - grid.im_min) * static_cast<double>(row) /
                                      static_cast<double>(grid.resolution - 1);
  return Complex(re, im);
}

bool StabilityMap::cell_diverged(Complex beta) const {
  const double fx = (beta.real() - grid.re_min) / (grid.re_max - grid.re_min) *
                    static_cast<double>(grid.resolution - 1);
  const double fy = (beta.imag() - grid.im_min) / (grid.im_max - grid.im_min) *
                    static_cast<double>(grid.resolution - 1);
  const auto col = static_cast<std::ptrdiff_t>(std::lround(fx));
  const auto row = static_cast<std::ptrdiff_t>(std::lround(fy));
  if (col < 0 || row < 0 || col >= static_cast<std::ptrdiff_t>(grid.resolution) ||
      row >= static_cast<std::ptrdiff_t>(grid.resolution))
    return true;
  return diverged[static_cast<std::size_t>(row) * grid.resolution +
                  static_cast<std::size_t>(col)] != 0;
}

StabilityMap stability_map(const Model& model, const RealTensor& x, const RealTensor& y,
                           const GridSpec& grid, std::size_t t_steps, unsigned workers) {
  if (grid.resolution < 2) throw std::invalid_argument("stability_map: resolution must be >= 2");
  if (t_steps < 1) throw std::invalid_argument("stability_map: t_steps must be >= 1");
  StabilityMap map;
  map.grid = grid;
  map.t_steps = t_steps;
  map.residuals = RealTensor(Shape{grid.resolution, grid.resolution});
  map.diverged.assign(grid.resolution * grid.resolution, 0);
  SettleConfig cfg;
  cfg.max_steps = t_steps;
  cfg.residual_tol = 0.0;  // run the full budget; the residual is the datum
  parallel_for(grid.resolution * grid.resolution, workers, [&](std::size_t cell) {
    const std::size_t row = cell / grid.resolution, col = cell % grid.resolution;
    auto res = settle(model, x, map.beta_at(row, col), y, cfg);
    if (res.diverged) {
      map.residuals[cell] = std::numeric_limits<double>::infinity();
      map.diverged[cell] = 1;
    } else {
      map.residuals[cell] = res.final_residual();
    }
  });
  return map;
}

void write_stability_csv(const StabilityMap& map, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < map.grid.resolution; ++r)
    for (std::size_t c = 0; c < map.grid.resolution; ++c) {
      const Complex b = map.beta_at(r, c);
      const std::size_t cell = r * map.grid.resolution + c;
      rows.push_back({format_double(b.real()), format_double(b.imag()),
                      format_double(map.residuals[cell]),
                      map.diverged[cell] ? "1" : "0"});
    }
  write_csv(path, {"re", "im", "residual", "diverged"}, rows);
}

void write_stability_pgm(const StabilityMap& map, const std::string& pgm_path,
                         const std::string& sidecar_path) {
  // log residual mapped to [0, 255]; dark = converged, white = diverged
  const double lo = 1e-8, hi = 1e2;
  std::vector<std::uint8_t> pixels(map.residuals.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double r = map.residuals[i];
    double v;
    if (map.diverged[i] || !std::isfinite(r))
      v = 1.0;
    else
      v = std::clamp(std::log10(std::max(r, lo) / lo) / std::log10(hi / lo), 0.0, 1.0);
    pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(pgm_path, pixels, map.grid.resolution, map.grid.resolution);
  std::vector<std::vector<std::string>> rows = {
      {"re_min", format_double(map.grid.re_min)}, {"re_max", format_double(map.grid.re_max)},
      {"im_min", format_double(map.grid.im_min)}, {"im_max", format_double(map.grid.im_max)},
      {"resolution", std::to_string(map.grid.resolution)},
      {"t_steps", std::to_string(map.t_steps)},
      {"init", "zeros"},
      {"gray", "log10 residual, 1e-8..1e2, 255 = diverged"}};
  write_csv(sidecar_path, {"key", "value"}, rows);
}

OrbitTrace orbit_trace(const Model& model, const RealTensor& x, const RealTensor& y,
                       const NudgePath& path, const std::vector<std::size_t>& units,
                       const SettleConfig& free_cfg, const SettleConfig& nudge_cfg) {
  OrbitTrace trace;
  trace.path = path;
  trace.units = units;
  auto free = settle(model, x, Complex{}, y, free_cfg);
  if (free.diverged) throw DivergenceError("orbit_trace: free phase diverged", -1);

  auto flatten_hidden = [](const CState& s) {
    std::vector<Complex> flat;
    for (std::size_t l = 0; l + 1 < s.size(); ++l)
      flat.insert(flat.end(), s[l].data.begin(), s[l].data.end());
    return flat;
  };

  std::vector<std::vector<Complex>> per_point;
  CState warm = free.state;
  for (std::size_t k = 0; k < path.n_points; ++k) {
    auto res = settle(model, x, path.point(k), y, nudge_cfg, &warm);
    if (res.diverged)
      throw DivergenceError("orbit_trace: divergence at path point " + std::to_string(k),
                            static_cast<int>(k));
    per_point.push_back(flatten_hidden(res.state));
    warm = std::move(res.state);
  }
  for (std::size_t u : units) {
    std::vector<Complex> orbit;
    std::vector<double> series;
    for (std::size_t k = 0; k < path.n_points; ++k) orbit.push_back(per_point[k].at(u));
    for (std::size_t t = 0; t < 2 * path.n_points; ++t)
      series.push_back(per_point[t % path.n_points].at(u).real());
    trace.orbit.push_back(std::move(orbit));
    trace.real_series.push_back(std::move(series));
  }
  return trace;
}

void write_orbit_csv(const OrbitTrace& trace, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t ui = 0; ui < trace.units.size(); ++ui)
    for (std::size_t k = 0; k < trace.path.n_points; ++k)
      rows.push_back({"orbit", std::to_string(trace.units[ui]), std::to_string(k),
                      format_double(trace.orbit[ui][k].real()),
                      format_double(trace.orbit[ui][k].imag())});
  for (std::size_t ui = 0; ui < trace.units.size(); ++ui)
    for (std::size_t t = 0; t < trace.real_series[ui].size(); ++t)
      rows.push_back({"series", std::to_string(trace.units[ui]), std::to_string(t),
                      format_double(trace.real_series[ui][t]), ""});
  write_csv(path, {"kind", "unit", "index", "re", "im"}, rows);
}

namespace {

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Radii: return "radius";
    case SweepAxis::NPoints: return "n_points";
    case SweepAxis::TOsc: return "t_osc";
  }
  return "?";
}

}  // namespace

SweepResult cosine_sweep(const Model& model, const std::vector<RealTensor>& xs,
                         const std::vector<RealTensor>& ys, const SweepRequest& req,
                         const SettleConfig& free_cfg, const SettleConfig& nudge_cfg,
                         unsigned workers) {
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("cosine_sweep: bad batch");
  SweepResult sweep;
  sweep.axis = req.axis;
  sweep.noise_std = req.noise_std;
  sweep.seed = req.seed;

  // noise-free oracle, once per batch
  std::vector<RealTensor> oracle;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    auto g = unrolled_adjoint_gradient(model, xs[s], ys[s], req.oracle_t_free);
    if (s == 0) {
      oracle = std::move(g.grads);
    } else {
      for (std::size_t p = 0; p < oracle.size(); ++p)
        for (std::size_t i = 0; i < oracle[p].size(); ++i) oracle[p][i] += g.grads[p][i];
    }
  }
  for (auto& t : oracle)
    for (auto& v : t.data) v /= static_cast<double>(xs.size());

  SettleConfig free_noisy = free_cfg;
  SettleConfig nudge_noisy = nudge_cfg;
  free_noisy.noise_std = req.noise_std;
  nudge_noisy.noise_std = req.noise_std;
  free_noisy.rng_seed = req.seed;
  nudge_noisy.rng_seed = req.seed;

  struct Job {
    double value;
    std::string estimator;
  };
  std::vector<Job> jobs;
  for (const auto& est : req.estimators)
    for (double v : req.values) jobs.push_back({v, est});
  std::vector<SweepPoint> points(jobs.size());

  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    SweepPoint pt;
    pt.axis_value = job.value;
    pt.estimator = job.estimator;
    double radius = req.radius;
    std::size_t n_points = req.n_points;
    std::size_t t_osc = 0;
    if (req.axis == SweepAxis::Radii) radius = job.value;
    if (req.axis == SweepAxis::NPoints) n_points = static_cast<std::size_t>(job.value);
    if (req.axis == SweepAxis::TOsc) t_osc = static_cast<std::size_t>(job.value);
    try {
      std::vector<GradientEstimate> parts;
      for (std::size_t s = 0; s < xs.size(); ++s) {
        if (job.estimator == "hep") {
          parts.push_back(hep_estimate(model, xs[s], ys[s], NudgePath::circle(radius, n_points),
                                       free_noisy, nudge_noisy, false, s));
        } else if (job.estimator == "classic") {
          parts.push_back(classic_ep(model, xs[s], ys[s], radius, free_noisy, nudge_noisy, s));
        } else if (job.estimator == "classic_avg") {
          parts.push_back(classic_ep_averaged(model, xs[s], ys[s], radius, free_noisy,
                                              nudge_noisy, req.classic_realizations, s));
        } else if (job.estimator == "online") {
          OnlineConfig ocfg;
          ocfg.t_osc = t_osc ? t_osc : 400;
          ocfg.radius = radius;
          ocfg.total_periods = req.online_periods;
          ocfg.t_plas = ocfg.t_osc * ocfg.total_periods;
          auto run = online_curve(model, xs[s], ys[s], ocfg, nudge_noisy, s);
          parts.push_back(run.per_period.back());
        } else {
          throw std::invalid_argument("unknown estimator: " + job.estimator);
        }
      }
      auto est = average_estimates(parts);
      pt.report = cosine_similarity(est.grads, oracle);
    } catch (const DivergenceError&) {
      pt.diverged = true;  // recorded as a NaN row
    }
    points[j] = std::move(pt);
  });
  sweep.points = std::move(points);
  return sweep;
}

void write_sweep_csv(const SweepResult& sweep, const std::vector<std::string>& param_names,
                     const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  const std::string axis = axis_name(sweep.axis);
  for (const auto& pt : sweep.points) {
    if (pt.diverged) {
      rows.push_back({axis, format_double(pt.axis_value), pt.estimator, "total", "nan",
                      std::to_string(sweep.seed)});
      continue;
    }
    rows.push_back({axis, format_double(pt.axis_value), pt.estimator, "total",
                    format_double(pt.report.total), std::to_string(sweep.seed)});
    for (std::size_t p = 0; p < pt.report.per_layer.size(); ++p)
      rows.push_back({axis, format_double(pt.axis_value), pt.estimator,
                      p < param_names.size() ? param_names[p] : std::to_string(p),
                      pt.report.layer_defined[p] ? format_double(pt.report.per_layer[p]) : "nan",
                      std::to_string(sweep.seed)});
  }
  write_csv(path, {"axis", "value", "estimator", "layer", "cosine", "seed"}, rows);
}

}  // namespace holoprop
