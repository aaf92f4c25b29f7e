#include "holoprop/estimators.hpp"

#include <cmath>

namespace holoprop {

namespace {

// Stream tags keeping noise draws independent across phases.
constexpr std::uint64_t kFreePhase = 0;
constexpr std::uint64_t kNudgePhaseBase = 1;
constexpr std::uint64_t kClassicNudge = 1'000'000;
constexpr std::uint64_t kAveragedBase = 2'000'000;
constexpr std::uint64_t kOnlinePhase = 4'000'000;

GradientEstimate realify(std::vector<ComplexTensor> complex_grads, std::string kind,
                         std::size_t n_points, double radius) {
  GradientEstimate est;
  est.estimator_kind = std::move(kind);
  est.n_points = n_points;
  est.radius = radius;
  double im_max = 0.0, im_sq = 0.0, re_sq = 0.0;
  for (auto& g : complex_grads) {
    RealTensor r(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) {
      r[i] = g[i].real();
      im_max = std::max(im_max, std::abs(g[i].imag()));
      im_sq += g[i].imag() * g[i].imag();
      re_sq += g[i].real() * g[i].real();
    }
    est.grads.push_back(std::move(r));
  }
  est.imag_residual = im_max;
  est.imag_ratio = re_sq > 0.0 ? std::sqrt(im_sq / re_sq) : 0.0;
  return est;
}

std::vector<ComplexTensor> zero_like(const std::vector<RealTensor>& params) {
  std::vector<ComplexTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape);
  return out;
}

}  // namespace

std::vector<ComplexTensor> local_grad(const Model& model, const CState& state,
                                      const RealTensor& x, Complex beta, const RealTensor& y) {
  return model.grad_f_theta(state, x, beta, y);
}

GradientEstimate classic_ep(const Model& model, const RealTensor& x, const RealTensor& y,
                            double beta, const SettleConfig& free_cfg,
                            const SettleConfig& nudge_cfg, std::uint64_t sample_id) {
  if (!(beta > 0.0)) throw std::invalid_argument("classic_ep: beta must be a positive real");
  auto free = settle_real(model, x, 0.0, y, free_cfg, nullptr, sample_id, kFreePhase);
  if (free.diverged) throw DivergenceError("classic_ep: free phase diverged", -1);
  auto nudged = settle_real(model, x, beta, y, nudge_cfg,
                            nudge_cfg.warm_start ? &free.state : nullptr, sample_id,
                            kClassicNudge);
  if (nudged.diverged) throw DivergenceError("classic_ep: nudged phase diverged", 0);
  auto g1 = model.grad_f_theta(nudged.state, x, beta, y);
  auto g0 = model.grad_f_theta(free.state, x, 0.0, y);
  GradientEstimate est;
  est.estimator_kind = "classic_ep";
  est.n_points = 1;
  est.radius = beta;
  est.phase_converged = {free.converged, nudged.converged};
  for (std::size_t p = 0; p < g0.size(); ++p) {
    RealTensor g(g0[p].shape);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g1[p][i] - g0[p][i]) / beta;
    est.grads.push_back(std::move(g));
  }
  return est;
}

GradientEstimate classic_ep_averaged(const Model& model, const RealTensor& x,
                                     const RealTensor& y, double beta,
                                     const SettleConfig& free_cfg, const SettleConfig& nudge_cfg,
                                     std::size_t realizations, std::uint64_t sample_id) {
  if (realizations < 1) throw std::invalid_argument("classic_ep_averaged: need >= 1 realization");
  auto g0 = zero_like(model.param_tensors());
  auto g1 = zero_like(model.param_tensors());
  std::vector<bool> phases;
  for (std::size_t r = 0; r < realizations; ++r) {
    auto free = settle_real(model, x, 0.0, y, free_cfg, nullptr, sample_id, kAveragedBase + 2 * r);
    if (free.diverged)
      throw DivergenceError("classic_ep_averaged: free phase diverged", -1);
    auto nudged = settle_real(model, x, beta, y, nudge_cfg,
                              nudge_cfg.warm_start ? &free.state : nullptr, sample_id,
                              kAveragedBase + 2 * r + 1);
    if (nudged.diverged)
      throw DivergenceError("classic_ep_averaged: nudged phase diverged", 0);
    phases.push_back(free.converged);
    phases.push_back(nudged.converged);
    auto gf = model.grad_f_theta(free.state, x, 0.0, y);
    auto gn = model.grad_f_theta(nudged.state, x, beta, y);
    for (std::size_t p = 0; p < g0.size(); ++p)
      for (std::size_t i = 0; i < g0[p].size(); ++i) {
        g0[p][i] += gf[p][i] / static_cast<double>(realizations);
        g1[p][i] += gn[p][i] / static_cast<double>(realizations);
      }
  }
  std::vector<ComplexTensor> diff = zero_like(model.param_tensors());
  for (std::size_t p = 0; p < diff.size(); ++p)
    for (std::size_t i = 0; i < diff[p].size(); ++i) diff[p][i] = (g1[p][i] - g0[p][i]) / beta;
  auto est = realify(std::move(diff), "classic_ep_averaged", realizations, beta);
  est.phase_converged = std::move(phases);
  return est;
}

PhaseTrace nudged_phase_trace(const Model& model, const RealTensor& x, const RealTensor& y,
                              const NudgePath& path, const SettleConfig& free_cfg,
                              const SettleConfig& nudge_cfg, bool cold_start,
                              std::uint64_t sample_id, const CState* free_state,
                              bool free_converged) {
  PhaseTrace trace;
  trace.path = path;
  if (free_state) {
    trace.converged.push_back(free_converged);
    trace.free_state = *free_state;
  } else {
    auto free = settle(model, x, Complex{}, y, free_cfg, nullptr, sample_id, kFreePhase);
    if (free.diverged) throw DivergenceError("free phase diverged", -1);
    trace.converged.push_back(free.converged);
    trace.free_state = std::move(free.state);
  }
  CState warm = trace.free_state;
  for (std::size_t k = 0; k < path.n_points; ++k) {
    const Complex beta_k = path.point(k);
    auto nudged = settle(model, x, beta_k, y, nudge_cfg, cold_start ? nullptr : &warm, sample_id,
                         kNudgePhaseBase + k);
    if (nudged.diverged)
      throw DivergenceError("nudged settle diverged at path point " + std::to_string(k) +
                                " (beta = " + std::to_string(beta_k.real()) + (beta_k.imag() < 0 ? " - " : " + ") +
                                std::to_string(std::abs(beta_k.imag())) + "i)",
                            static_cast<int>(k));
    trace.converged.push_back(nudged.converged);
    trace.g.push_back(model.grad_f_theta(nudged.state, x, beta_k, y));
    if (!cold_start) warm = std::move(nudged.state);
  }
  return trace;
}

GradientEstimate hep_from_trace(const PhaseTrace& trace) {
  const std::size_t n = trace.path.n_points;
  const double radius = trace.path.radius;
  auto acc = trace.g.front();
  for (auto& t : acc)
    for (auto& v : t.data) v = Complex{};
  for (std::size_t k = 0; k < n; ++k) {
    const double phi = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    const Complex kernel(std::cos(phi), std::sin(phi));
    for (std::size_t p = 0; p < acc.size(); ++p)
      for (std::size_t i = 0; i < acc[p].size(); ++i) acc[p][i] += trace.g[k][p][i] * kernel;
  }
  const double scale = 1.0 / (static_cast<double>(n) * radius);
  for (auto& t : acc)
    for (auto& v : t.data) v *= scale;
  auto est = realify(std::move(acc), "hep", n, radius);
  est.phase_converged = trace.converged;
  return est;
}

GradientEstimate hep_estimate(const Model& model, const RealTensor& x, const RealTensor& y,
                              const NudgePath& path, const SettleConfig& free_cfg,
                              const SettleConfig& nudge_cfg, bool cold_start,
                              std::uint64_t sample_id) {
  return hep_from_trace(
      nudged_phase_trace(model, x, y, path, free_cfg, nudge_cfg, cold_start, sample_id));
}

namespace {

GradientEstimate projection_estimate(const std::vector<std::vector<ComplexTensor>>& trace,
                                     double radius, bool imaginary) {
  const std::size_t n = trace.size();
  if (n < 3)
    throw std::invalid_argument("projection estimators need at least 3 path samples");
  std::vector<ComplexTensor> acc;
  for (const auto& t : trace.front()) acc.emplace_back(t.shape);
  for (std::size_t k = 0; k < n; ++k) {
    const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    const double w = imaginary ? std::sin(phi) : std::cos(phi);
    for (std::size_t p = 0; p < acc.size(); ++p)
      for (std::size_t i = 0; i < acc[p].size(); ++i) {
        const double part = imaginary ? trace[k][p][i].imag() : trace[k][p][i].real();
        acc[p][i] += w * part;
      }
  }
  const double scale = 2.0 / (static_cast<double>(n) * radius);
  for (auto& t : acc)
    for (auto& v : t.data) v *= scale;
  return realify(std::move(acc), imaginary ? "imag_projection" : "real_projection", n, radius);
}

}  // namespace

GradientEstimate real_projection_estimate(const std::vector<std::vector<ComplexTensor>>& trace,
                                          double radius) {
  return projection_estimate(trace, radius, false);
}

GradientEstimate imag_projection_estimate(const std::vector<std::vector<ComplexTensor>>& trace,
                                          double radius) {
  return projection_estimate(trace, radius, true);
}

GradientEstimate real_projection_estimate(const PhaseTrace& trace) {
  return projection_estimate(trace.g, trace.path.radius, false);
}

GradientEstimate imag_projection_estimate(const PhaseTrace& trace) {
  return projection_estimate(trace.g, trace.path.radius, true);
}

OnlineFilter::OnlineFilter(std::size_t n_params, double radius)
    : acc_(n_params), radius_(radius) {}

void OnlineFilter::accumulate(const std::vector<ComplexTensor>& g, double phase) {
  const Complex kernel(std::cos(-phase), std::sin(-phase));
  if (steps_ == 0) {
    for (std::size_t p = 0; p < acc_.size(); ++p) acc_[p] = ComplexTensor(g[p].shape);
  }
  for (std::size_t p = 0; p < acc_.size(); ++p)
    for (std::size_t i = 0; i < acc_[p].size(); ++i) acc_[p][i] += g[p][i] * kernel;
  ++steps_;
}

GradientEstimate OnlineFilter::estimate(const std::string& kind) const {
  std::vector<ComplexTensor> scaled = acc_;
  const double scale = 1.0 / (static_cast<double>(steps_) * radius_);
  for (auto& t : scaled)
    for (auto& v : t.data) v *= scale;
  auto est = realify(std::move(scaled), kind, steps_, radius_);
  return est;
}

OnlineRun online_curve(const Model& model, const RealTensor& x, const RealTensor& y,
                       const OnlineConfig& ocfg, const SettleConfig& cfg,
                       std::uint64_t sample_id) {
  ocfg.validate();
  auto cache = model.make_cache(x);
  CState cur = model.initial_state(x);
  CState next = model.initial_state(x);
  NoiseContext noise;
  noise.std = cfg.noise_std;
  noise.seed = cfg.rng_seed;
  noise.sample = sample_id;
  noise.phase = kOnlinePhase;
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < ocfg.equilibrate_steps; ++k) {
    model.step(cur, next, *cache, Complex{}, y, noise, t++);
    std::swap(cur, next);
  }
  OnlineFilter filter(model.param_tensors().size(), ocfg.radius);
  OnlineRun run;
  const double period = static_cast<double>(ocfg.t_osc);
  for (std::size_t p = 0; p < ocfg.total_periods; ++p) {
    double res_acc = 0.0;
    for (std::size_t k = 0; k < ocfg.t_osc; ++k) {
      const double phase =
          2.0 * M_PI * (static_cast<double>(p) * period + static_cast<double>(k) + 0.5) / period;
      const Complex beta = ocfg.radius * Complex(std::cos(phase), std::sin(phase));
      model.step(cur, next, *cache, beta, y, noise, t++);
      res_acc += residual_norm(cur, next);
      std::swap(cur, next);
      for (const auto& layer : cur)
        if (!layer.finite() || max_abs(layer) > cfg.divergence_threshold)
          throw DivergenceError("online dynamics diverged", static_cast<int>(p));
      filter.accumulate(model.grad_f_theta(cur, x, beta, y), phase);
    }
    auto est = filter.estimate("online");
    est.n_points = p + 1;  // completed periods
    run.per_period.push_back(std::move(est));
    run.mean_residual.push_back(res_acc / period);
  }
  return run;
}

GradientEstimate online_estimate(const Model& model, const RealTensor& x, const RealTensor& y,
                                 const OnlineConfig& ocfg, const SettleConfig& cfg,
                                 std::uint64_t sample_id) {
  OnlineConfig run_cfg = ocfg;
  run_cfg.total_periods = std::max<std::size_t>(1, ocfg.t_plas / ocfg.t_osc);
  auto run = online_curve(model, x, y, run_cfg, cfg, sample_id);
  return run.per_period.back();
}

BiasProbe bias_scaling_probe(const Model& model, const RealTensor& x, const RealTensor& y,
                             std::size_t n_points, const std::vector<double>& radii,
                             const std::vector<RealTensor>& oracle, const SettleConfig& free_cfg,
                             const SettleConfig& nudge_cfg) {
  if (radii.size() < 3) throw std::invalid_argument("bias_scaling_probe: need >= 3 radii");
  BiasProbe probe;
  probe.radii = radii;
  for (double r : radii) {
    auto est = hep_estimate(model, x, y, NudgePath::circle(r, n_points), free_cfg, nudge_cfg);
    double err = 0.0;
    for (std::size_t p = 0; p < est.grads.size(); ++p)
      for (std::size_t i = 0; i < est.grads[p].size(); ++i) {
        const double d = est.grads[p][i] - oracle[p][i];
        err += d * d;
      }
    probe.errors.push_back(std::sqrt(err));
  }
  // least-squares slope in log-log
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double lx = std::log(radii[i]), ly = std::log(probe.errors[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  probe.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return probe;
}

GradientEstimate average_estimates(const std::vector<GradientEstimate>& parts) {
  if (parts.empty()) throw std::invalid_argument("average_estimates: empty batch");
  GradientEstimate out = parts.front();
  const double w = 1.0 / static_cast<double>(parts.size());
  for (auto& g : out.grads)
    for (auto& v : g.data) v *= w;
  for (std::size_t s = 1; s < parts.size(); ++s) {
    for (std::size_t p = 0; p < out.grads.size(); ++p)
      for (std::size_t i = 0; i < out.grads[p].size(); ++i)
        out.grads[p][i] += w * parts[s].grads[p][i];
    out.imag_residual = std::max(out.imag_residual, parts[s].imag_residual);
    out.imag_ratio = std::max(out.imag_ratio, parts[s].imag_ratio);
  }
  return out;
}

double grad_norm(const std::vector<RealTensor>& grads) {
  double acc = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace holoprop
