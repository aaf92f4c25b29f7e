#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "holoprop/dynamics.hpp"
#include "holoprop/model.hpp"

namespace holoprop {

struct GradientEstimate {
  std::vector<RealTensor> grads;  // realified, shapes mirror the parameters
  std::string estimator_kind;
  std::size_t n_points = 0;
  double radius = 0.0;
  double imag_residual = 0.0;  // max |Im| discarded by realification
  double imag_ratio = 0.0;     // ||Im|| / ||Re|| over all parameters
  std::vector<bool> phase_converged;
};

// A nudged settle left the stable region; estimators refuse to average junk.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what, int phase = -1)
      : std::runtime_error(what), phase_index(phase) {}
  int phase_index;  // which path point diverged; -1 for the free phase
};

// dF/dtheta at a state: products of the oscillating activities (plus the
// beta-scaled readout term). Thin named wrapper over the model's own rule.
std::vector<ComplexTensor> local_grad(const Model& model, const CState& state,
                                      const RealTensor& x, Complex beta, const RealTensor& y);

// Classic two-phase estimate: (dF/dtheta at the nudged point minus at the
// free point) / beta, with real beta > 0.
GradientEstimate classic_ep(const Model& model, const RealTensor& x, const RealTensor& y,
                            double beta, const SettleConfig& free_cfg,
                            const SettleConfig& nudge_cfg, std::uint64_t sample_id = 0);

// Noise protocol variant: free and nudged phases each averaged over
// `realizations` independent noise draws before differencing.
GradientEstimate classic_ep_averaged(const Model& model, const RealTensor& x,
                                     const RealTensor& y, double beta,
                                     const SettleConfig& free_cfg, const SettleConfig& nudge_cfg,
                                     std::size_t realizations, std::uint64_t sample_id = 0);

// dF/dtheta evaluated at the settled fixed point of every path point
// beta_0..beta_{N-1}, each warm-started from the previous one (free point
// first) unless cold_start is set.
struct PhaseTrace {
  NudgePath path;
  std::vector<std::vector<ComplexTensor>> g;  // [k][param]
  std::vector<bool> converged;                // free phase first, then each k
  CState free_state;
};
PhaseTrace nudged_phase_trace(const Model& model, const RealTensor& x, const RealTensor& y,
                              const NudgePath& path, const SettleConfig& free_cfg,
                              const SettleConfig& nudge_cfg, bool cold_start = false,
                              std::uint64_t sample_id = 0, const CState* free_state = nullptr,
                              bool free_converged = true);

// N-point estimator: (1/(N|beta|)) sum_k dF/dtheta(s*_k, beta_k) e^{-2 i pi k/N}.
GradientEstimate hep_from_trace(const PhaseTrace& trace);
GradientEstimate hep_estimate(const Model& model, const RealTensor& x, const RealTensor& y,
                              const NudgePath& path, const SettleConfig& free_cfg,
                              const SettleConfig& nudge_cfg, bool cold_start = false,
                              std::uint64_t sample_id = 0);

// First Fourier mode read from one projection only: the real part against the
// cosine or the imaginary part against the sine, Riemann sums over the N
// samples of one period. N >= 3.
GradientEstimate real_projection_estimate(const std::vector<std::vector<ComplexTensor>>& trace,
                                          double radius);
GradientEstimate imag_projection_estimate(const std::vector<std::vector<ComplexTensor>>& trace,
                                          double radius);
GradientEstimate real_projection_estimate(const PhaseTrace& trace);
GradientEstimate imag_projection_estimate(const PhaseTrace& trace);

struct OnlineConfig {
  std::size_t t_osc = 300;        // steps per teaching oscillation
  std::size_t t_plas = 900;       // steps per plasticity event
  std::size_t total_periods = 1;  // periods to integrate when estimating
  double radius = 0.4;
  std::size_t equilibrate_steps = 0;  // optional free-settle steps before t=0
  void validate() const {
    if (t_osc < 1 || t_plas < t_osc)
      throw std::invalid_argument("OnlineConfig: need t_plas >= t_osc >= 1");
    if (!(radius > 0.0)) throw std::invalid_argument("OnlineConfig: radius must be positive");
  }
};

// Always-on oscillating teaching signal: beta(t) rides the circle while the
// synaptic filter accumulates dF/dtheta(t) e^{-i phi(t)} every step. Both the
// signal and the kernel are evaluated at step midpoints. One estimate
// snapshot per completed period, plus the mean step residual of each period
// (the tracking quality of the dynamics).
struct OnlineRun {
  std::vector<GradientEstimate> per_period;
  std::vector<double> mean_residual;
};
OnlineRun online_curve(const Model& model, const RealTensor& x, const RealTensor& y,
                       const OnlineConfig& ocfg, const SettleConfig& cfg,
                       std::uint64_t sample_id = 0);
GradientEstimate online_estimate(const Model& model, const RealTensor& x, const RealTensor& y,
                                 const OnlineConfig& ocfg, const SettleConfig& cfg,
                                 std::uint64_t sample_id = 0);

// Accumulator behind online_curve, exposed so traces from other sources (for
// instance closed-form fixed points in tests) can be filtered identically.
class OnlineFilter {
 public:
  OnlineFilter(std::size_t n_params, double radius);
  void accumulate(const std::vector<ComplexTensor>& g, double phase);
  GradientEstimate estimate(const std::string& kind) const;
  std::size_t steps() const { return steps_; }

 private:
  std::vector<ComplexTensor> acc_;
  double radius_;
  std::size_t steps_ = 0;
};

// Fits log ||hep(N) - oracle|| against log radius; the slope approximates N.
struct BiasProbe {
  double slope = 0.0;
  std::vector<double> radii;
  std::vector<double> errors;
};
BiasProbe bias_scaling_probe(const Model& model, const RealTensor& x, const RealTensor& y,
                             std::size_t n_points, const std::vector<double>& radii,
                             const std::vector<RealTensor>& oracle, const SettleConfig& free_cfg,
                             const SettleConfig& nudge_cfg);

// Mean of per-sample realified estimates (gradient of the mean loss).
GradientEstimate average_estimates(const std::vector<GradientEstimate>& parts);

double grad_norm(const std::vector<RealTensor>& grads);

}  // namespace holoprop
