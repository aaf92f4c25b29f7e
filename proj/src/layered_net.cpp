#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "holoprop/model.hpp"
#include "holoprop/rng.hpp"

namespace holoprop {

namespace {

struct LayerInfo {
  bool conv = false;
  std::size_t w_idx = 0;  // params index of W; bias at w_idx + 1
  // dense
  std::size_t in_size = 0, out_size = 0;
  // conv
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t channels = 0, kernel = 0, stride = 1, padding = 0;
  std::size_t pre_h = 0, pre_w = 0;  // conv output extent before pooling
  std::size_t pool = 0;              // pool window == pool stride; 0 disables
  std::size_t out_h = 0, out_w = 0;
  Shape state_shape;
};

template <typename T>
Tensor<T> reshaped(const Tensor<T>& t, Shape s) {
  Tensor<T> out;
  out.shape = std::move(s);
  out.data = t.data;
  return out;
}

template <typename T>
Tensor<T> flat(const Tensor<T>& t) {
  return reshaped(t, Shape{t.size()});
}

inline void convert(const RealTensor& src, Tensor<double>& dst) { dst.data = src.data; }
inline void convert(const RealTensor& src, Tensor<Complex>& dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] = Complex(src[i], 0.0);
}

struct LayeredCache : StepCache {
  RealTensor x;        // input, shaped for the first layer
  RealTensor current;  // forward current the clamped input injects into layer 1
  RealTensor u;        // pre-pool conv current (conv first layer)
  RealTensor weights;  // its pool weights, when pooling
};

template <typename T>
Tensor<T> outer(const Tensor<T>& u, const Tensor<T>& v) {
  Tensor<T> out(Shape{u.size(), v.size()});
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out.data[i * v.size() + j] = u.data[i] * v.data[j];
  return out;
}

void axpy(const RealTensor& src, RealTensor& dst) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// VJP of softmax pooling: given dpooled, accumulate into du.
void pool_vjp(const RealTensor& u, const RealTensor& weights, const RealTensor& pooled,
              const RealTensor& dpooled, std::size_t window, double tau, RealTensor& du) {
  const std::size_t c = u.shape[0], oh = pooled.shape[1], ow = pooled.shape[2];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double g = dpooled.at(ch, i, j);
        const double pv = pooled.at(ch, i, j);
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) {
            const std::size_t r = i * window + a, s = j * window + b;
            du.at(ch, r, s) += g * weights.at(ch, r, s) * (1.0 + (u.at(ch, r, s) - pv) / tau);
          }
      }
}

// VJP of unpooling z = weights(u) .* expand(v): given dz, accumulate into dv
// (pooled level) and du (softmax-weight sensitivity).
void unpool_vjp(const RealTensor& weights, const RealTensor& v, const RealTensor& dz,
                std::size_t window, double tau, RealTensor& dv, RealTensor& du) {
  const std::size_t c = v.shape[0], oh = v.shape[1], ow = v.shape[2];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double vv = v.at(ch, i, j);
        double dot = 0.0;
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) {
            const std::size_t r = i * window + a, s = j * window + b;
            dv.at(ch, i, j) += weights.at(ch, r, s) * dz.at(ch, r, s);
            dot += weights.at(ch, r, s) * vv * dz.at(ch, r, s);
          }
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) {
            const std::size_t r = i * window + a, s = j * window + b;
            du.at(ch, r, s) += (weights.at(ch, r, s) / tau) * (vv * dz.at(ch, r, s) - dot);
          }
      }
}

}  // namespace

struct LayeredNet::Layout {
  std::vector<LayerInfo> layers;
};

namespace {

std::vector<LayerInfo> build_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayerInfo> layers;
  if (spec.kind == NetworkSpec::Kind::Mlp) {
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
      LayerInfo li;
      li.w_idx = 2 * (l - 1);
      li.in_size = spec.layer_sizes[l - 1];
      li.out_size = spec.layer_sizes[l];
      li.state_shape = {li.out_size};
      layers.push_back(li);
    }
    return layers;
  }
  std::size_t c = spec.in_channels, h = spec.in_height, w = spec.in_width;
  std::size_t idx = 0;
  for (const auto& cl : spec.conv_layers) {
    LayerInfo li;
    li.conv = true;
    li.w_idx = idx;
    li.in_c = c;
    li.in_h = h;
    li.in_w = w;
    li.channels = cl.channels;
    li.kernel = cl.kernel;
    li.stride = cl.stride;
    li.padding = cl.padding;
    li.pre_h = conv_out_extent(h, cl.kernel, cl.stride, cl.padding);
    li.pre_w = conv_out_extent(w, cl.kernel, cl.stride, cl.padding);
    li.pool = cl.pool_window;
    li.out_h = li.pool ? (li.pre_h - li.pool) / li.pool + 1 : li.pre_h;
    li.out_w = li.pool ? (li.pre_w - li.pool) / li.pool + 1 : li.pre_w;
    li.state_shape = {li.channels, li.out_h, li.out_w};
    layers.push_back(li);
    c = cl.channels;
    h = li.out_h;
    w = li.out_w;
    idx += 2;
  }
  std::size_t in_size = c * h * w;
  for (std::size_t fc : spec.fc_sizes) {
    LayerInfo li;
    li.w_idx = idx;
    li.in_size = in_size;
    li.out_size = fc;
    li.state_shape = {fc};
    layers.push_back(li);
    in_size = fc;
    idx += 2;
  }
  return layers;
}

std::vector<RealTensor> zero_params(const std::vector<LayerInfo>& layers) {
  std::vector<RealTensor> params;
  for (const auto& li : layers) {
    if (li.conv) {
      params.emplace_back(Shape{li.channels, li.in_c, li.kernel, li.kernel});
      params.emplace_back(Shape{li.channels});
    } else {
      params.emplace_back(Shape{li.out_size, li.in_size});
      params.emplace_back(Shape{li.out_size});
    }
  }
  return params;
}

}  // namespace

LayeredNet::LayeredNet(NetworkSpec spec, std::vector<RealTensor> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  auto layers = build_layout(spec_);
  auto expect = zero_params(layers);
  if (expect.size() != params_.size())
    throw std::invalid_argument("LayeredNet: wrong number of parameter tensors");
  for (std::size_t i = 0; i < expect.size(); ++i)
    if (expect[i].shape != params_[i].shape)
      throw std::invalid_argument("LayeredNet: parameter " + std::to_string(i) + " has shape " +
                                  shape_to_string(params_[i].shape) + ", expected " +
                                  shape_to_string(expect[i].shape));
  layout_ = std::make_shared<Layout>(Layout{std::move(layers)});
}

LayeredNet LayeredNet::glorot(const NetworkSpec& spec, std::uint64_t seed) {
  auto layers = build_layout(spec);
  auto params = zero_params(layers);
  for (const auto& info : layers) {
    RealTensor& w = params[info.w_idx];
    double fan_in, fan_out;
    if (info.conv) {
      fan_in = static_cast<double>(info.in_c * info.kernel * info.kernel);
      fan_out = static_cast<double>(info.channels * info.kernel * info.kernel);
    } else {
      fan_in = static_cast<double>(info.in_size);
      fan_out = static_cast<double>(info.out_size);
    }
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = a * (2.0 * rng::uniform(seed, {info.w_idx, i}) - 1.0);
  }
  return LayeredNet(spec, std::move(params));
}

std::unique_ptr<Model> LayeredNet::clone() const { return std::make_unique<LayeredNet>(*this); }

std::vector<std::string> LayeredNet::param_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 1; l <= params_.size() / 2; ++l) {
    names.push_back("W" + std::to_string(l));
    names.push_back("b" + std::to_string(l));
  }
  return names;
}

std::size_t LayeredNet::num_layers() const { return layout_->layers.size(); }

CState LayeredNet::initial_state(const RealTensor&) const {
  CState s;
  for (const auto& li : layout_->layers) s.emplace_back(li.state_shape);
  return s;
}

RState LayeredNet::initial_state_real(const RealTensor&) const {
  RState s;
  for (const auto& li : layout_->layers) s.emplace_back(li.state_shape);
  return s;
}

std::unique_ptr<StepCache> LayeredNet::make_cache(const RealTensor& x) const {
  const auto& first = layout_->layers.front();
  auto cache = std::make_unique<LayeredCache>();
  if (first.conv) {
    if (x.size() != first.in_c * first.in_h * first.in_w)
      throw std::invalid_argument("input size " + shape_to_string(x.shape) +
                                  " does not match network input " + spec_.canonical_text());
    cache->x = reshaped(x, Shape{first.in_c, first.in_h, first.in_w});
    cache->u = conv2d(params_[first.w_idx], cache->x, first.stride, first.padding);
    if (first.pool) {
      auto pr = softmax_pool(cache->u, first.pool, first.pool, spec_.tau);
      cache->current = std::move(pr.pooled);
      cache->weights = std::move(pr.weights);
    } else {
      cache->current = cache->u;
    }
  } else {
    if (x.size() != first.in_size)
      throw std::invalid_argument("input size " + shape_to_string(x.shape) +
                                  " does not match network input " + spec_.canonical_text());
    cache->x = flat(x);
    cache->current = RealTensor(Shape{first.out_size});
    matvec_into(params_[first.w_idx], cache->x, cache->current);
  }
  return cache;
}

template <typename T>
void LayeredNet::step_impl(const std::vector<Tensor<T>>& prev, std::vector<Tensor<T>>& next,
                           const StepCache& cache_base, T beta, const RealTensor& y,
                           const NoiseContext& noise, std::uint64_t t) const {
  const auto& cache = static_cast<const LayeredCache&>(cache_base);
  const auto& layers = layout_->layers;
  const std::size_t L = layers.size();

  // Pre-pool currents of conv layers fed by the previous state. Their pool
  // weights also drive the unpooled feedback into the layer below.
  std::vector<Tensor<T>> pooled(L), weights(L);
  for (std::size_t i = 1; i + 1 < L; ++i) {
    if (!layers[i].conv) continue;
    Tensor<T> u = conv2d(params_[layers[i].w_idx], prev[i - 1], layers[i].stride,
                         layers[i].padding);
    if (layers[i].pool) {
      auto pr = softmax_pool(u, layers[i].pool, layers[i].pool, spec_.tau);
      pooled[i] = std::move(pr.pooled);
      weights[i] = std::move(pr.weights);
    } else {
      pooled[i] = std::move(u);
    }
  }

  for (std::size_t i = 0; i + 1 < L; ++i) {
    const auto& li = layers[i];
    const RealTensor& b = params_[li.w_idx + 1];
    Tensor<T>& out = next[i];
    if (i == 0) {
      convert(cache.current, out);
    } else if (li.conv) {
      out.data = std::move(pooled[i].data);
    } else {
      matvec_into(params_[li.w_idx], prev[i - 1], out);
    }
    if (i + 2 < L) {
      const auto& up = layers[i + 1];
      if (up.conv) {
        Tensor<T> z = up.pool ? softmax_unpool(prev[i + 1], weights[i + 1], up.pool, up.pool)
                              : prev[i + 1];
        Tensor<T> fb =
            conv2d_transpose(params_[up.w_idx], z, up.stride, up.padding, li.out_h, li.out_w);
        for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += fb.data[k];
      } else if (li.conv) {
        Tensor<T> fb(Shape{up.in_size});
        matvec_transpose_into(params_[up.w_idx], prev[i + 1], fb);
        for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += fb.data[k];
      } else {
        matvec_transpose_accumulate(params_[up.w_idx], prev[i + 1], out);
      }
    } else if (beta != T{}) {
      // penultimate layer: teaching term beta W_L^T (y - s_L)
      const auto& ro = layers[L - 1];
      Tensor<T> diff(Shape{ro.out_size});
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = beta * (y[k] - prev[L - 1][k]);
      matvec_transpose_accumulate(params_[ro.w_idx], diff, out);
    }
    if (li.conv) {
      const std::size_t hw = li.out_h * li.out_w;
      for (std::size_t c = 0; c < li.channels; ++c)
        for (std::size_t k = 0; k < hw; ++k) out.data[c * hw + k] += b[c];
    } else {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
    }
    if (noise.std > 0.0) {
      for (std::size_t k = 0; k < out.size(); ++k)
        out[k] += noise.std * rng::gaussian(noise.seed, {noise.phase, noise.sample, t, i, k});
    }
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = activate(spec_.activation, out[k]);
  }

  const auto& ro = layers[L - 1];
  Tensor<T>& out = next[L - 1];
  matvec_into(params_[ro.w_idx], prev[L - 2], out);
  const RealTensor& b = params_[ro.w_idx + 1];
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
  out = softmax_readout(out);
}

void LayeredNet::step(const CState& prev, CState& next, const StepCache& cache, Complex beta,
                      const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const {
  step_impl(prev, next, cache, beta, y, noise, t);
}

void LayeredNet::step(const RState& prev, RState& next, const StepCache& cache, double beta,
                      const RealTensor& y, const NoiseContext& noise, std::uint64_t t) const {
  step_impl(prev, next, cache, beta, y, noise, t);
}

template <typename T>
std::vector<Tensor<T>> LayeredNet::grad_impl(const std::vector<Tensor<T>>& state,
                                             const RealTensor& x, T beta,
                                             const RealTensor& y) const {
  const auto& layers = layout_->layers;
  const std::size_t L = layers.size();
  std::vector<Tensor<T>> grads;
  grads.reserve(2 * L);
  Tensor<T> xt(Shape{x.size()});
  convert(x, xt);
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const auto& li = layers[i];
    if (li.conv) {
      Tensor<T> in = i == 0 ? reshaped(xt, Shape{li.in_c, li.in_h, li.in_w}) : state[i - 1];
      Tensor<T> gout = state[i];
      if (li.pool) {
        Tensor<T> u = conv2d(params_[li.w_idx], in, li.stride, li.padding);
        auto pr = softmax_pool(u, li.pool, li.pool, spec_.tau);
        gout = softmax_unpool(state[i], pr.weights, li.pool, li.pool);
      }
      Tensor<T> gw = conv2d_weight_grad(in, gout, li.stride, li.padding, li.kernel, li.kernel);
      for (auto& v : gw.data) v = -v;
      grads.push_back(std::move(gw));
      Tensor<T> gb(Shape{li.channels});
      const std::size_t hw = li.out_h * li.out_w;
      for (std::size_t c = 0; c < li.channels; ++c) {
        T acc{};
        for (std::size_t k = 0; k < hw; ++k) acc += state[i].data[c * hw + k];
        gb[c] = -acc;
      }
      grads.push_back(std::move(gb));
    } else {
      Tensor<T> in = i == 0 ? xt : flat(state[i - 1]);
      Tensor<T> gw = outer(state[i], in);
      for (auto& v : gw.data) v = -v;
      grads.push_back(std::move(gw));
      Tensor<T> gb = state[i];
      for (auto& v : gb.data) v = -v;
      grads.push_back(std::move(gb));
    }
  }
  // readout parameters enter F through beta * loss
  const auto& ro = layers[L - 1];
  Tensor<T> err(Shape{ro.out_size});
  for (std::size_t k = 0; k < err.size(); ++k) err[k] = beta * (state[L - 1][k] - y[k]);
  grads.push_back(outer(err, flat(state[L - 2])));
  grads.push_back(std::move(err));
  return grads;
}

std::vector<ComplexTensor> LayeredNet::grad_f_theta(const CState& state, const RealTensor& x,
                                                    Complex beta, const RealTensor& y) const {
  return grad_impl(state, x, beta, y);
}

std::vector<RealTensor> LayeredNet::grad_f_theta(const RState& state, const RealTensor& x,
                                                 double beta, const RealTensor& y) const {
  return grad_impl(state, x, beta, y);
}

Complex LayeredNet::loss(const CState& state, const RealTensor& y) const {
  return cross_entropy(state.back(), y);
}

double LayeredNet::loss(const RState& state, const RealTensor& y) const {
  return cross_entropy(state.back(), y);
}

Complex LayeredNet::layered_energy(const CState& state, const RealTensor& x, Complex beta,
                                   const RealTensor& y) const {
  if (spec_.kind != NetworkSpec::Kind::Mlp)
    throw std::invalid_argument("layered_energy: defined for the mlp topology");
  const auto& layers = layout_->layers;
  const std::size_t L = layers.size();
  Complex e{};
  ComplexTensor xt = to_complex(x);
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const ComplexTensor& s = state[i];
    const ComplexTensor& in = i == 0 ? xt : state[i - 1];
    const RealTensor& w = params_[layers[i].w_idx];
    const RealTensor& b = params_[layers[i].w_idx + 1];
    ComplexTensor ws(Shape{s.size()});
    matvec_into(w, in, ws);
    for (std::size_t k = 0; k < s.size(); ++k)
      e += 0.5 * s[k] * s[k] - s[k] * ws[k] - b[k] * s[k];
  }
  // loss reads the penultimate state through the readout map
  const auto& ro = layers[L - 1];
  ComplexTensor logits(Shape{ro.out_size});
  matvec_into(params_[ro.w_idx], state[L - 2], logits);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += params_[ro.w_idx + 1][k];
  return e + beta * cross_entropy(softmax_readout(logits), y);
}

Model::AdjointResult LayeredNet::adjoint_gradient(const RealTensor& x, const RealTensor& y,
                                                  std::size_t t_steps) const {
  const auto& layers = layout_->layers;
  const std::size_t L = layers.size();
  auto cache_ptr = make_cache(x);
  const auto& cache = static_cast<const LayeredCache&>(*cache_ptr);
  const double tau = spec_.tau;

  std::vector<RState> states(t_steps + 1);
  std::vector<RState> pres(t_steps + 1);     // hidden pre-activations
  std::vector<RState> us(t_steps + 1);       // conv pre-pool currents (layers >= 1)
  std::vector<RState> omegas(t_steps + 1);   // their pool weights
  std::vector<RState> pooleds(t_steps + 1);  // their pooled values
  states[0] = initial_state_real(x);
  double residual = 0.0;
  for (std::size_t t = 1; t <= t_steps; ++t) {
    const RState& prev = states[t - 1];
    RState next = initial_state_real(x);
    RState pre(L), uu(L), om(L), po(L);
    for (std::size_t i = 1; i + 1 < L; ++i) {
      if (!layers[i].conv) continue;
      uu[i] = conv2d(params_[layers[i].w_idx], prev[i - 1], layers[i].stride, layers[i].padding);
      if (layers[i].pool) {
        auto pr = softmax_pool(uu[i], layers[i].pool, layers[i].pool, tau);
        po[i] = std::move(pr.pooled);
        om[i] = std::move(pr.weights);
      } else {
        po[i] = uu[i];
      }
    }
    for (std::size_t i = 0; i + 1 < L; ++i) {
      const auto& li = layers[i];
      RealTensor cur;
      if (i == 0) {
        cur = reshaped(cache.current, li.state_shape);
      } else if (li.conv) {
        cur = po[i];
      } else {
        cur = RealTensor(li.state_shape);
        matvec_into(params_[li.w_idx], prev[i - 1], cur);
      }
      if (i + 2 < L) {
        const auto& up = layers[i + 1];
        if (up.conv) {
          RealTensor z =
              up.pool ? softmax_unpool(prev[i + 1], om[i + 1], up.pool, up.pool) : prev[i + 1];
          RealTensor fb =
              conv2d_transpose(params_[up.w_idx], z, up.stride, up.padding, li.out_h, li.out_w);
          axpy(fb, cur);
        } else {
          RealTensor fb(Shape{up.in_size});
          matvec_transpose_into(params_[up.w_idx], prev[i + 1], fb);
          for (std::size_t k = 0; k < cur.size(); ++k) cur.data[k] += fb.data[k];
        }
      }
      const RealTensor& b = params_[li.w_idx + 1];
      if (li.conv) {
        const std::size_t hw = li.out_h * li.out_w;
        for (std::size_t c = 0; c < li.channels; ++c)
          for (std::size_t k = 0; k < hw; ++k) cur.data[c * hw + k] += b[c];
      } else {
        for (std::size_t k = 0; k < cur.size(); ++k) cur[k] += b[k];
      }
      for (std::size_t k = 0; k < cur.size(); ++k)
        next[i][k] = activate(spec_.activation, cur[k]);
      pre[i] = std::move(cur);
    }
    matvec_into(params_[layers[L - 1].w_idx], prev[L - 2], next[L - 1]);
    for (std::size_t k = 0; k < next[L - 1].size(); ++k)
      next[L - 1][k] += params_[layers[L - 1].w_idx + 1][k];
    next[L - 1] = softmax_readout(next[L - 1]);

    residual = 0.0;
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t k = 0; k < next[i].size(); ++k) {
        double d = next[i][k] - prev[i][k];
        residual += d * d;
      }
    residual = std::sqrt(residual);
    states[t] = std::move(next);
    pres[t] = std::move(pre);
    us[t] = std::move(uu);
    omegas[t] = std::move(om);
    pooleds[t] = std::move(po);
  }

  AdjointResult res;
  res.final_residual = residual;
  res.converged = residual <= 1e-8;
  res.grads = zero_params(layers);

  // loss at the readout of the final hidden state
  const auto& ro = layers[L - 1];
  RealTensor logits(Shape{ro.out_size});
  matvec_into(params_[ro.w_idx], states[t_steps][L - 2], logits);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += params_[ro.w_idx + 1][k];
  RealTensor p = softmax_readout(logits);
  RealTensor perr(Shape{ro.out_size});
  for (std::size_t k = 0; k < perr.size(); ++k) perr[k] = p[k] - y[k];
  axpy(outer(perr, flat(states[t_steps][L - 2])), res.grads[ro.w_idx]);
  axpy(perr, res.grads[ro.w_idx + 1]);

  RState delta(L);
  for (std::size_t i = 0; i < L; ++i) delta[i] = RealTensor(layers[i].state_shape);
  matvec_transpose_into(params_[ro.w_idx], perr, delta[L - 2]);

  for (std::size_t t = t_steps; t >= 1; --t) {
    RState ndelta(L);
    for (std::size_t i = 0; i < L; ++i) ndelta[i] = RealTensor(layers[i].state_shape);
    RState du(L);
    for (std::size_t i = 0; i + 1 < L; ++i)
      if (layers[i].conv)
        du[i] = RealTensor(Shape{layers[i].channels, layers[i].pre_h, layers[i].pre_w});

    for (std::size_t i = 0; i + 1 < L; ++i) {
      const auto& li = layers[i];
      RealTensor dpre(li.state_shape);
      bool any = false;
      for (std::size_t k = 0; k < dpre.size(); ++k) {
        dpre[k] = delta[i][k] * activate_derivative(spec_.activation, pres[t][i][k]);
        any = any || dpre[k] != 0.0;
      }
      if (!any) continue;
      {
        RealTensor& gb = res.grads[li.w_idx + 1];
        if (li.conv) {
          const std::size_t hw = li.out_h * li.out_w;
          for (std::size_t c = 0; c < li.channels; ++c)
            for (std::size_t k = 0; k < hw; ++k) gb[c] += dpre.data[c * hw + k];
        } else {
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += dpre[k];
        }
      }
      // forward-current path
      if (li.conv) {
        if (i == 0) {
          if (li.pool)
            pool_vjp(cache.u, cache.weights, cache.current, dpre, li.pool, tau, du[i]);
          else
            axpy(dpre, du[i]);
        } else {
          if (li.pool)
            pool_vjp(us[t][i], omegas[t][i], pooleds[t][i], dpre, li.pool, tau, du[i]);
          else
            axpy(dpre, du[i]);
        }
      } else {
        const RealTensor in = i == 0 ? cache.x : flat(states[t - 1][i - 1]);
        axpy(outer(dpre, in), res.grads[li.w_idx]);
        if (i > 0) {
          RealTensor back(Shape{li.in_size});
          matvec_transpose_into(params_[li.w_idx], dpre, back);
          for (std::size_t k = 0; k < ndelta[i - 1].size(); ++k)
            ndelta[i - 1].data[k] += back.data[k];
        }
      }
      // feedback path from layer i+1 (free phase: absent at the penultimate layer)
      if (i + 2 < L) {
        const auto& up = layers[i + 1];
        if (up.conv) {
          const RealTensor& v = states[t - 1][i + 1];
          RealTensor z = up.pool ? softmax_unpool(v, omegas[t][i + 1], up.pool, up.pool) : v;
          RealTensor dz = conv2d(params_[up.w_idx], dpre, up.stride, up.padding);
          axpy(conv2d_weight_grad(dpre, z, up.stride, up.padding, up.kernel, up.kernel),
               res.grads[up.w_idx]);
          if (up.pool)
            unpool_vjp(omegas[t][i + 1], v, dz, up.pool, tau, ndelta[i + 1], du[i + 1]);
          else
            axpy(dz, ndelta[i + 1]);
        } else {
          const RealTensor dflat = flat(dpre);
          axpy(outer(states[t - 1][i + 1], dflat), res.grads[up.w_idx]);
          RealTensor fwd(Shape{up.out_size});
          matvec_into(params_[up.w_idx], dflat, fwd);
          axpy(fwd, ndelta[i + 1]);
        }
      }
    }
    // conv pre-pool sensitivities flow into the kernel and the layer below
    for (std::size_t i = 0; i + 1 < L; ++i) {
      const auto& li = layers[i];
      if (!li.conv) continue;
      bool any = false;
      for (std::size_t k = 0; k < du[i].size(); ++k) any = any || du[i][k] != 0.0;
      if (!any) continue;
      const RealTensor in =
          i == 0 ? cache.x : states[t - 1][i - 1];
      axpy(conv2d_weight_grad(in, du[i], li.stride, li.padding, li.kernel, li.kernel),
           res.grads[li.w_idx]);
      if (i > 0) {
        RealTensor back =
            conv2d_transpose(params_[li.w_idx], du[i], li.stride, li.padding, li.in_h, li.in_w);
        axpy(back, ndelta[i - 1]);
      }
    }
    delta = std::move(ndelta);
  }
  return res;
}

}  // namespace holoprop
