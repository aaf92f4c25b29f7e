#include "holoprop/dynamics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace holoprop {

NudgePath NudgePath::circle(double radius, std::size_t n_points) {
  if (!(radius > 0.0)) throw std::invalid_argument("NudgePath: radius must be positive");
  if (n_points < 2) throw std::invalid_argument("NudgePath: at least 2 nudging points required");
  return NudgePath{radius, n_points};
}

Complex NudgePath::point(std::size_t k) const {
  const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n_points);
  return radius * Complex(std::cos(phi), std::sin(phi));
}

Complex NudgePath::at_time(double t, double period) const {
  const double phi = 2.0 * M_PI * t / period;
  return radius * Complex(std::cos(phi), std::sin(phi));
}

namespace {

template <typename State>
double residual_norm_impl(const State& prev, const State& next) {
  double acc = 0.0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    if (prev[i].size() != next[i].size())
      throw std::invalid_argument("residual_norm: layer " + std::to_string(i) +
                                  " shape mismatch " + shape_to_string(prev[i].shape) + " vs " +
                                  shape_to_string(next[i].shape));
    for (std::size_t k = 0; k < prev[i].size(); ++k) {
      const auto d = next[i][k] - prev[i][k];
      acc += std::norm(Complex(d));
    }
  }
  if (!std::isfinite(acc)) return std::numeric_limits<double>::infinity();
  return std::sqrt(acc);
}

template <typename State>
bool state_diverged(const State& s, double threshold) {
  for (const auto& layer : s) {
    if (!layer.finite()) return true;
    for (std::size_t k = 0; k < layer.size(); ++k)
      if (std::abs(Complex(layer[k])) > threshold) return true;
  }
  return false;
}

template <typename State, typename Beta, typename Result>
Result settle_impl(const Model& model, const RealTensor& x, Beta beta, const RealTensor& y,
                   const SettleConfig& cfg, const State* init, std::uint64_t sample_id,
                   std::uint64_t phase_id, State (Model::*make_init)(const RealTensor&) const) {
  if (cfg.max_steps < 1) throw std::invalid_argument("settle: max_steps must be >= 1");
  Result res;
  State cur = init ? *init : (model.*make_init)(x);
  State next = (model.*make_init)(x);
  auto cache = model.make_cache(x);
  NoiseContext noise;
  noise.std = cfg.noise_std;
  noise.seed = cfg.rng_seed;
  noise.sample = sample_id;
  noise.phase = phase_id;
  res.residual_trace.reserve(cfg.max_steps);
  for (std::size_t t = 0; t < cfg.max_steps; ++t) {
    model.step(cur, next, *cache, beta, y, noise, t);
    const double r = residual_norm_impl(cur, next);
    res.residual_trace.push_back(r);
    std::swap(cur, next);
    ++res.steps_used;
    if (!std::isfinite(r) || state_diverged(cur, cfg.divergence_threshold)) {
      res.diverged = true;
      break;
    }
    if (cfg.residual_tol > 0.0 && r <= cfg.residual_tol) break;
  }
  res.converged = !res.diverged && !res.residual_trace.empty() &&
                  res.residual_trace.back() <= cfg.residual_tol;
  res.state = std::move(cur);
  return res;
}

}  // namespace

double residual_norm(const CState& prev, const CState& next) {
  return residual_norm_impl(prev, next);
}

double residual_norm(const RState& prev, const RState& next) {
  return residual_norm_impl(prev, next);
}

SettleResult settle(const Model& model, const RealTensor& x, Complex beta, const RealTensor& y,
                    const SettleConfig& cfg, const CState* init, std::uint64_t sample_id,
                    std::uint64_t phase_id) {
  return settle_impl<CState, Complex, SettleResult>(model, x, beta, y, cfg, init, sample_id,
                                                    phase_id, &Model::initial_state);
}

RealSettleResult settle_real(const Model& model, const RealTensor& x, double beta,
                             const RealTensor& y, const SettleConfig& cfg, const RState* init,
                             std::uint64_t sample_id, std::uint64_t phase_id) {
  return settle_impl<RState, double, RealSettleResult>(model, x, beta, y, cfg, init, sample_id,
                                                       phase_id, &Model::initial_state_real);
}

CState to_complex_state(const RState& s) {
  CState out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(to_complex(t));
  return out;
}

RState real_state_part(const CState& s) {
  RState out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(real_part(t));
  return out;
}

}  // namespace holoprop
