#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "holoprop/tensor.hpp"

namespace holoprop {

enum class Activation { Identity, ShiftedSigmoid, DSiLU };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Scalar activations. Complex overloads return NaN when the evaluation lands
// within 1e-9 of a pole of the underlying sigmoid; settles treat that as
// divergence instead of propagating junk.
double activate(Activation a, double z);
Complex activate(Activation a, Complex z);
double activate_derivative(Activation a, double z);

ComplexTensor shifted_sigmoid(const ComplexTensor& z);
ComplexTensor dsilu(const ComplexTensor& z);

// Softmax pooling with temperature tau over non-overlapping or strided square
// windows. `weights` has the input's shape and caches the per-cell softmax
// weight used by the matching unpooling.
template <typename T>
struct PoolResult {
  Tensor<T> pooled;
  Tensor<T> weights;
};
template <typename T>
PoolResult<T> softmax_pool(const Tensor<T>& x, std::size_t window, std::size_t stride,
                           double tau);
template <typename T>
Tensor<T> softmax_unpool(const Tensor<T>& pooled, const Tensor<T>& weights, std::size_t window,
                         std::size_t stride);

template <typename T>
Tensor<T> softmax_readout(const Tensor<T>& logits);

// Cross-entropy -y.log(s) on the readout layer; errors if the target component
// of s is within 1e-12 of zero.
Complex cross_entropy(const ComplexTensor& s_out, const RealTensor& y);
double cross_entropy(const RealTensor& s_out, const RealTensor& y);

// Generic two-body Hopfield energy on a full symmetric coupling matrix, used
// by the tiny test networks: E = 1/2 sum s_i^2 - 1/2 sum_{i!=j} w_ij o_i o_j
// - sum b_i o_i with o = activation(s).
Complex hopfield_energy(const RealTensor& w_sym, const RealTensor& bias, const ComplexTensor& s,
                        Activation act);
Complex total_energy(const RealTensor& w_sym, const RealTensor& bias, const ComplexTensor& s,
                     Activation act, Complex beta, const ComplexTensor& readout,
                     const RealTensor& y);
// dE/dw_ij = -o_i o_j and dE/db_i = -o_i for the generic form above.
ComplexTensor hopfield_weight_grad(const ComplexTensor& s, Activation act);
ComplexTensor hopfield_bias_grad(const ComplexTensor& s, Activation act);

struct ConvLayerSpec {
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t pool_window = 0;  // 0 disables pooling
  std::size_t pool_stride = 0;
};

struct NetworkSpec {
  enum class Kind { Mlp, Cnn };
  Kind kind = Kind::Mlp;
  // mlp: sizes including input and output layers
  std::vector<std::size_t> layer_sizes;
  // cnn
  std::size_t in_channels = 0, in_height = 0, in_width = 0;
  std::vector<ConvLayerSpec> conv_layers;
  std::vector<std::size_t> fc_sizes;  // hidden fc sizes then output size
  Activation activation = Activation::ShiftedSigmoid;
  double tau = 1.0;
  double noise_std = 0.0;

  void validate() const;
  std::size_t output_size() const;
  std::string canonical_text() const;
};

using CState = std::vector<ComplexTensor>;
using RState = std::vector<RealTensor>;

struct NoiseContext {
  double std = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  std::uint64_t phase = 0;
};

struct StepCache {
  virtual ~StepCache() = default;
};

// A convergent network: synchronous fixed-point dynamics in a clamped input,
// a scalar loss on the settled state, and the per-parameter quantity dF/dtheta
// whose first Fourier coefficient over a teaching circle is the loss gradient.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::unique_ptr<Model> clone() const = 0;

  virtual std::vector<RealTensor>& param_tensors() = 0;
  virtual const std::vector<RealTensor>& param_tensors() const = 0;
  virtual std::vector<std::string> param_names() const = 0;

  virtual CState initial_state(const RealTensor& x) const = 0;
  virtual RState initial_state_real(const RealTensor& x) const = 0;

  virtual std::unique_ptr<StepCache> make_cache(const RealTensor& x) const = 0;

  virtual void step(const CState& prev, CState& next, const StepCache& cache, Complex beta,
                    const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const = 0;
  virtual void step(const RState& prev, RState& next, const StepCache& cache, double beta,
                    const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const = 0;

  virtual std::vector<ComplexTensor> grad_f_theta(const CState& state, const RealTensor& x,
                                                  Complex beta, const RealTensor& y) const = 0;
  virtual std::vector<RealTensor> grad_f_theta(const RState& state, const RealTensor& x,
                                               double beta, const RealTensor& y) const = 0;

  virtual Complex loss(const CState& state, const RealTensor& y) const = 0;
  virtual double loss(const RState& state, const RealTensor& y) const = 0;

  struct AdjointResult {
    std::vector<RealTensor> grads;
    double final_residual = 0.0;
    bool converged = true;
  };
  // Reverse accumulation through t_steps synchronous free-phase updates of
  // the loss at the final state.
  virtual AdjointResult adjoint_gradient(const RealTensor& x, const RealTensor& y,
                                         std::size_t t_steps) const = 0;
};

// Layered network with the discrete synchronous dynamics: hidden layers read
// their neighbours through W and W^T, the penultimate layer receives the
// teaching term beta * W_L^T (y - s_L), and the last layer is a softmax
// readout recomputed every step.
class LayeredNet : public Model {
 public:
  LayeredNet(NetworkSpec spec, std::vector<RealTensor> params);
  static LayeredNet glorot(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  std::unique_ptr<Model> clone() const override;
  std::vector<RealTensor>& param_tensors() override { return params_; }
  const std::vector<RealTensor>& param_tensors() const override { return params_; }
  std::vector<std::string> param_names() const override;

  CState initial_state(const RealTensor& x) const override;
  RState initial_state_real(const RealTensor& x) const override;
  std::unique_ptr<StepCache> make_cache(const RealTensor& x) const override;

  void step(const CState& prev, CState& next, const StepCache& cache, Complex beta,
            const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const override;
  void step(const RState& prev, RState& next, const StepCache& cache, double beta,
            const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const override;

  std::vector<ComplexTensor> grad_f_theta(const CState& state, const RealTensor& x, Complex beta,
                                          const RealTensor& y) const override;
  std::vector<RealTensor> grad_f_theta(const RState& state, const RealTensor& x, double beta,
                                       const RealTensor& y) const override;

  Complex loss(const CState& state, const RealTensor& y) const override;
  double loss(const RState& state, const RealTensor& y) const override;

  AdjointResult adjoint_gradient(const RealTensor& x, const RealTensor& y,
                                 std::size_t t_steps) const override;

  // Scalar function of the layered topology whose theta-derivatives are
  // grad_f_theta (mlp only; test instrumentation).
  Complex layered_energy(const CState& state, const RealTensor& x, Complex beta,
                         const RealTensor& y) const;

  std::size_t num_layers() const;  // state layers, readout included

 private:
  struct Layout;
  template <typename T>
  void step_impl(const std::vector<Tensor<T>>& prev, std::vector<Tensor<T>>& next,
                 const StepCache& cache, T beta, const RealTensor& y, const NoiseContext& noise,
                 std::uint64_t t) const;
  template <typename T>
  std::vector<Tensor<T>> grad_impl(const std::vector<Tensor<T>>& state, const RealTensor& x,
                                   T beta, const RealTensor& y) const;

  NetworkSpec spec_;
  std::vector<RealTensor> params_;  // W1, b1, W2, b2, ...
  std::shared_ptr<const Layout> layout_;
};

// One linear unit with energy 1/2 s^2 - theta s and quadratic loss
// 1/2 (s - y)^2; every estimator has a closed form on it.
class ToyModel : public Model {
 public:
  explicit ToyModel(double theta);

  std::unique_ptr<Model> clone() const override;
  std::vector<RealTensor>& param_tensors() override { return params_; }
  const std::vector<RealTensor>& param_tensors() const override { return params_; }
  std::vector<std::string> param_names() const override { return {"theta"}; }

  CState initial_state(const RealTensor& x) const override;
  RState initial_state_real(const RealTensor& x) const override;
  std::unique_ptr<StepCache> make_cache(const RealTensor& x) const override;

  void step(const CState& prev, CState& next, const StepCache& cache, Complex beta,
            const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const override;
  void step(const RState& prev, RState& next, const StepCache& cache, double beta,
            const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const override;

  std::vector<ComplexTensor> grad_f_theta(const CState& state, const RealTensor& x, Complex beta,
                                          const RealTensor& y) const override;
  std::vector<RealTensor> grad_f_theta(const RState& state, const RealTensor& x, double beta,
                                       const RealTensor& y) const override;

  Complex loss(const CState& state, const RealTensor& y) const override;
  double loss(const RState& state, const RealTensor& y) const override;

  AdjointResult adjoint_gradient(const RealTensor& x, const RealTensor& y,
                                 std::size_t t_steps) const override;

 private:
  std::vector<RealTensor> params_;
};

RealTensor one_hot(std::size_t label, std::size_t classes);

}  // namespace holoprop
