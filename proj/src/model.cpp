#include "holoprop/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "holoprop/rng.hpp"

namespace holoprop {

namespace {
constexpr double kPoleGuard = 1e-9;
constexpr double kLogGuard = 1e-12;

inline Complex nan_scalar() {
  return Complex(std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN());
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// 1/(1+e^w) with the pole guard around e^w == -1.
inline Complex guarded_logistic(Complex w) {
  Complex ew = std::exp(w);
  if (!std::isfinite(ew.real()) || !std::isfinite(ew.imag())) return nan_scalar();
  Complex denom = 1.0 + ew;
  if (std::abs(denom) < kPoleGuard) return nan_scalar();
  return 1.0 / denom;
}
}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ShiftedSigmoid: return "shifted_sigmoid";
    case Activation::DSiLU: return "dsilu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "shifted_sigmoid") return Activation::ShiftedSigmoid;
  if (name == "dsilu") return Activation::DSiLU;
  throw std::invalid_argument("unknown activation: " + name);
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ShiftedSigmoid: return sigmoid(4.0 * z - 2.0);
    case Activation::DSiLU: return 0.5 * z * sigmoid(z) + (1.0 - 0.5 * z) * sigmoid(z - 2.0);
  }
  return z;
}

Complex activate(Activation a, Complex z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ShiftedSigmoid: return guarded_logistic(-4.0 * z + 2.0);
    case Activation::DSiLU: {
      Complex s0 = guarded_logistic(-z);
      Complex s2 = guarded_logistic(-z + 2.0);
      return 0.5 * z * s0 + (1.0 - 0.5 * z) * s2;
    }
  }
  return z;
}

double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ShiftedSigmoid: {
      double s = sigmoid(4.0 * z - 2.0);
      return 4.0 * s * (1.0 - s);
    }
    case Activation::DSiLU: {
      double s0 = sigmoid(z), s2 = sigmoid(z - 2.0);
      return 0.5 * s0 + 0.5 * z * s0 * (1.0 - s0) - 0.5 * s2 +
             (1.0 - 0.5 * z) * s2 * (1.0 - s2);
    }
  }
  return 1.0;
}

ComplexTensor shifted_sigmoid(const ComplexTensor& z) {
  ComplexTensor out(z.shape);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(Activation::ShiftedSigmoid, z[i]);
  return out;
}

ComplexTensor dsilu(const ComplexTensor& z) {
  ComplexTensor out(z.shape);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(Activation::DSiLU, z[i]);
  return out;
}

namespace {
inline double real_of(double v) { return v; }
inline double real_of(Complex v) { return v.real(); }
inline double exp_of(double v) { return std::exp(v); }
inline Complex exp_of(Complex v) { return std::exp(v); }
}  // namespace

template <typename T>
PoolResult<T> softmax_pool(const Tensor<T>& x, std::size_t window, std::size_t stride,
                           double tau) {
  if (tau <= 0.0) throw std::invalid_argument("softmax_pool: tau must be positive");
  if (window == 0 || stride == 0) throw std::invalid_argument("softmax_pool: bad window/stride");
  if (stride != window)
    throw std::invalid_argument("softmax_pool: only stride == window supported");
  if (x.rank() != 3) throw std::invalid_argument("softmax_pool: expected [C x H x W] input");
  const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
  if ((h - window) % stride != 0 || (w - window) % stride != 0 || h < window || w < window)
    throw std::invalid_argument("softmax_pool: window does not tile input " +
                                shape_to_string(x.shape));
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  PoolResult<T> res{Tensor<T>(Shape{c, oh, ow}), Tensor<T>(x.shape)};
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v)
            m = std::max(m, real_of(x.at(ch, i * stride + u, j * stride + v)) / tau);
        T denom{};
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v)
            denom += exp_of(x.at(ch, i * stride + u, j * stride + v) / tau - m);
        T acc{};
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v) {
            const T xv = x.at(ch, i * stride + u, j * stride + v);
            const T wt = exp_of(xv / tau - m) / denom;
            res.weights.at(ch, i * stride + u, j * stride + v) = wt;
            acc += wt * xv;
          }
        res.pooled.at(ch, i, j) = acc;
      }
  return res;
}

template <typename T>
Tensor<T> softmax_unpool(const Tensor<T>& pooled, const Tensor<T>& weights, std::size_t window,
                         std::size_t stride) {
  if (weights.rank() != 3 || pooled.rank() != 3)
    throw std::invalid_argument("softmax_unpool: expected [C x H x W] tensors");
  if (stride != window)
    throw std::invalid_argument("softmax_unpool: only stride == window supported");
  const std::size_t c = weights.shape[0], h = weights.shape[1], w = weights.shape[2];
  const std::size_t oh = pooled.shape[1], ow = pooled.shape[2];
  if (pooled.shape[0] != c || (h - window) / stride + 1 != oh || (w - window) / stride + 1 != ow)
    throw std::invalid_argument("softmax_unpool: cached weights " + shape_to_string(weights.shape) +
                                " do not match pooled " + shape_to_string(pooled.shape));
  Tensor<T> out(weights.shape);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const T pv = pooled.at(ch, i, j);
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v)
            out.at(ch, i * stride + u, j * stride + v) =
                weights.at(ch, i * stride + u, j * stride + v) * pv;
      }
  return out;
}

template PoolResult<double> softmax_pool(const Tensor<double>&, std::size_t, std::size_t, double);
template PoolResult<Complex> softmax_pool(const Tensor<Complex>&, std::size_t, std::size_t,
                                          double);
template Tensor<double> softmax_unpool(const Tensor<double>&, const Tensor<double>&, std::size_t,
                                       std::size_t);
template Tensor<Complex> softmax_unpool(const Tensor<Complex>&, const Tensor<Complex>&,
                                        std::size_t, std::size_t);

template <typename T>
Tensor<T> softmax_readout(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) m = std::max(m, real_of(logits[i]));
  T denom{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = exp_of(logits[i] - m);
    denom += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = out[i] / denom;
  return out;
}

template Tensor<double> softmax_readout(const Tensor<double>&);
template Tensor<Complex> softmax_readout(const Tensor<Complex>&);

Complex cross_entropy(const ComplexTensor& s_out, const RealTensor& y) {
  if (s_out.size() != y.size())
    throw std::invalid_argument("cross_entropy: shape mismatch " + shape_to_string(s_out.shape) +
                                " vs " + shape_to_string(y.shape));
  Complex acc{};
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    if (std::abs(s_out[i]) <= kLogGuard)
      throw std::domain_error("cross_entropy: target component of the readout is (near-)zero");
    acc -= y[i] * std::log(s_out[i]);
  }
  return acc;
}

double cross_entropy(const RealTensor& s_out, const RealTensor& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    if (std::abs(s_out[i]) <= kLogGuard)
      throw std::domain_error("cross_entropy: target component of the readout is (near-)zero");
    acc -= y[i] * std::log(s_out[i]);
  }
  return acc;
}

Complex hopfield_energy(const RealTensor& w_sym, const RealTensor& bias, const ComplexTensor& s,
                        Activation act) {
  const std::size_t n = s.size();
  if (w_sym.rank() != 2 || w_sym.shape[0] != n || w_sym.shape[1] != n || bias.size() != n)
    throw std::invalid_argument("hopfield_energy: shape mismatch, w " +
                                shape_to_string(w_sym.shape) + " s " + shape_to_string(s.shape));
  ComplexTensor o(s.shape);
  for (std::size_t i = 0; i < n; ++i) o[i] = activate(act, s[i]);
  Complex e{};
  for (std::size_t i = 0; i < n; ++i) e += 0.5 * s[i] * s[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      e -= 0.5 * w_sym.at(i, j) * o[i] * o[j];
    }
  for (std::size_t i = 0; i < n; ++i) e -= bias[i] * o[i];
  return e;
}

Complex total_energy(const RealTensor& w_sym, const RealTensor& bias, const ComplexTensor& s,
                     Activation act, Complex beta, const ComplexTensor& readout,
                     const RealTensor& y) {
  return hopfield_energy(w_sym, bias, s, act) + beta * cross_entropy(readout, y);
}

ComplexTensor hopfield_weight_grad(const ComplexTensor& s, Activation act) {
  const std::size_t n = s.size();
  ComplexTensor o(s.shape);
  for (std::size_t i = 0; i < n; ++i) o[i] = activate(act, s[i]);
  ComplexTensor g(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.at(i, j) = (i == j) ? Complex{} : -o[i] * o[j];
  return g;
}

ComplexTensor hopfield_bias_grad(const ComplexTensor& s, Activation act) {
  ComplexTensor g(s.shape);
  for (std::size_t i = 0; i < s.size(); ++i) g[i] = -activate(act, s[i]);
  return g;
}

void NetworkSpec::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("NetworkSpec: tau must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("NetworkSpec: noise_std must be >= 0");
  if (kind == Kind::Mlp) {
    if (layer_sizes.size() < 3)
      throw std::invalid_argument("NetworkSpec: mlp needs input, at least one hidden, output");
    for (std::size_t s : layer_sizes)
      if (s == 0) throw std::invalid_argument("NetworkSpec: zero layer size");
  } else {
    if (conv_layers.empty() || fc_sizes.size() < 2)
      throw std::invalid_argument(
          "NetworkSpec: cnn needs conv layers and at least one hidden fc plus output");
    if (in_channels == 0 || in_height == 0 || in_width == 0)
      throw std::invalid_argument("NetworkSpec: cnn input shape unset");
    std::size_t h = in_height, w = in_width;
    for (const auto& c : conv_layers) {
      if (c.channels == 0) throw std::invalid_argument("NetworkSpec: zero conv channels");
      h = conv_out_extent(h, c.kernel, c.stride, c.padding);
      w = conv_out_extent(w, c.kernel, c.stride, c.padding);
      if (c.pool_window > 0) {
        if (c.pool_stride != c.pool_window)
          throw std::invalid_argument("NetworkSpec: pool stride must equal window");
        if (h < c.pool_window || (h - c.pool_window) % c.pool_stride != 0 || w < c.pool_window ||
            (w - c.pool_window) % c.pool_stride != 0)
          throw std::invalid_argument("NetworkSpec: pool window does not tile conv output");
        h = (h - c.pool_window) / c.pool_stride + 1;
        w = (w - c.pool_window) / c.pool_stride + 1;
      }
    }
  }
}

std::size_t NetworkSpec::output_size() const {
  return kind == Kind::Mlp ? layer_sizes.back() : fc_sizes.back();
}

std::string NetworkSpec::canonical_text() const {
  std::ostringstream os;
  if (kind == Kind::Mlp) {
    os << "mlp layers=";
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) os << (i ? "," : "") << layer_sizes[i];
  } else {
    os << "cnn input=" << in_channels << "x" << in_height << "x" << in_width << " conv=";
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
      const auto& c = conv_layers[i];
      os << (i ? ";" : "") << c.channels << "k" << c.kernel << "s" << c.stride << "p" << c.padding
         << "pool" << c.pool_window;
    }
    os << " fc=";
    for (std::size_t i = 0; i < fc_sizes.size(); ++i) os << (i ? "," : "") << fc_sizes[i];
  }
  os << " act=" << activation_name(activation) << " tau=" << tau << " noise=" << noise_std;
  return os.str();
}

RealTensor one_hot(std::size_t label, std::size_t classes) {
  RealTensor y(Shape{classes});
  y[label] = 1.0;
  return y;
}

ToyModel::ToyModel(double theta) {
  params_.emplace_back(Shape{1});
  params_[0][0] = theta;
}

std::unique_ptr<Model> ToyModel::clone() const { return std::make_unique<ToyModel>(*this); }

CState ToyModel::initial_state(const RealTensor&) const { return {ComplexTensor(Shape{1})}; }
RState ToyModel::initial_state_real(const RealTensor&) const { return {RealTensor(Shape{1})}; }

std::unique_ptr<StepCache> ToyModel::make_cache(const RealTensor&) const {
  return std::make_unique<StepCache>();
}

void ToyModel::step(const CState& prev, CState& next, const StepCache&, Complex beta,
                    const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const {
  double eta = noise.std > 0.0
                   ? noise.std * rng::gaussian(noise.seed, {noise.phase, noise.sample, t, 0, 0})
                   : 0.0;
  next[0][0] = params_[0][0] + beta * (y[0] - prev[0][0]) + eta;
}

void ToyModel::step(const RState& prev, RState& next, const StepCache&, double beta,
                    const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const {
  double eta = noise.std > 0.0
                   ? noise.std * rng::gaussian(noise.seed, {noise.phase, noise.sample, t, 0, 0})
                   : 0.0;
  next[0][0] = params_[0][0] + beta * (y[0] - prev[0][0]) + eta;
}

std::vector<ComplexTensor> ToyModel::grad_f_theta(const CState& state, const RealTensor&, Complex,
                                                  const RealTensor&) const {
  ComplexTensor g(Shape{1});
  g[0] = -state[0][0];
  return {g};
}

std::vector<RealTensor> ToyModel::grad_f_theta(const RState& state, const RealTensor&, double,
                                               const RealTensor&) const {
  RealTensor g(Shape{1});
  g[0] = -state[0][0];
  return {g};
}

Complex ToyModel::loss(const CState& state, const RealTensor& y) const {
  Complex d = state[0][0] - y[0];
  return 0.5 * d * d;
}

double ToyModel::loss(const RState& state, const RealTensor& y) const {
  double d = state[0][0] - y[0];
  return 0.5 * d * d;
}

Model::AdjointResult ToyModel::adjoint_gradient(const RealTensor&, const RealTensor& y,
                                                std::size_t t_steps) const {
  // s <- theta reaches its fixed point after one step and ds/dtheta = 1.
  AdjointResult res;
  RealTensor g(Shape{1});
  g[0] = t_steps >= 1 ? params_[0][0] - y[0] : 0.0;
  res.grads = {g};
  res.final_residual = 0.0;
  res.converged = t_steps >= 1;
  return res;
}

}  // namespace holoprop
