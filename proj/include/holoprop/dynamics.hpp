#pragma once

#include <cstdint>
#include <vector>

#include "holoprop/model.hpp"

namespace holoprop {

// Teaching-signal circle: the N-th roots of unity scaled by the radius.
struct NudgePath {
  double radius = 0.1;
  std::size_t n_points = 2;

  static NudgePath circle(double radius, std::size_t n_points);
  Complex point(std::size_t k) const;
  // Continuous parameterization beta(t) = radius * e^{2 i pi t / period}.
  Complex at_time(double t, double period) const;
};

struct SettleConfig {
  std::size_t max_steps = 200;
  double residual_tol = 0.0;  // 0: pure step-count mode
  bool warm_start = true;     // nudged phases seed from the previous fixed point
  double noise_std = 0.0;
  std::uint64_t rng_seed = 0;
  double divergence_threshold = 1e6;
};

struct SettleResult {
  CState state;
  std::vector<double> residual_trace;  // euclidean norm between consecutive steps
  bool converged = false;
  bool diverged = false;
  std::size_t steps_used = 0;
  double final_residual() const {
    return residual_trace.empty() ? 0.0 : residual_trace.back();
  }
};

struct RealSettleResult {
  RState state;
  std::vector<double> residual_trace;
  bool converged = false;
  bool diverged = false;
  std::size_t steps_used = 0;
  double final_residual() const {
    return residual_trace.empty() ? 0.0 : residual_trace.back();
  }
};

double residual_norm(const CState& prev, const CState& next);
double residual_norm(const RState& prev, const RState& next);

// Iterates the synchronous step until the residual drops below the tolerance
// or the step budget runs out. Divergence (non-finite values or magnitudes
// beyond the threshold) aborts and is reported, never propagated.
SettleResult settle(const Model& model, const RealTensor& x, Complex beta, const RealTensor& y,
                    const SettleConfig& cfg, const CState* init = nullptr,
                    std::uint64_t sample_id = 0, std::uint64_t phase_id = 0);

RealSettleResult settle_real(const Model& model, const RealTensor& x, double beta,
                             const RealTensor& y, const SettleConfig& cfg,
                             const RState* init = nullptr, std::uint64_t sample_id = 0,
                             std::uint64_t phase_id = 0);

CState to_complex_state(const RState& s);
RState real_state_part(const CState& s);

}  // namespace holoprop
