#include "holoprop/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace holoprop {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape s, T fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

template <>
bool Tensor<double>::finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

template <>
bool Tensor<Complex>::finite() const {
  for (const Complex& v : data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

template struct Tensor<double>;
template struct Tensor<Complex>;

ComplexTensor to_complex(const RealTensor& a) {
  ComplexTensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Complex(a[i], 0.0);
  return out;
}

RealTensor real_part(const ComplexTensor& a) {
  RealTensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

RealTensor imag_part(const ComplexTensor& a) {
  RealTensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].imag();
  return out;
}

bool is_real(const ComplexTensor& a) {
  for (const Complex& v : a.data)
    if (v.imag() != 0.0) return false;
  return true;
}

namespace {

void require_broadcastable(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return;
  if (shape_size(a) == 1 || shape_size(b) == 1) return;
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a) +
                              " vs " + shape_to_string(b));
}

template <typename F>
ComplexTensor broadcast_op(const ComplexTensor& a, const ComplexTensor& b, F f, const char* op) {
  require_broadcastable(a.shape, b.shape, op);
  if (a.shape == b.shape) {
    ComplexTensor out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (shape_size(b.shape) == 1) {
    ComplexTensor out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[0]);
    return out;
  }
  ComplexTensor out(b.shape);
  for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(a[0], b[i]);
  return out;
}

}  // namespace

ComplexTensor cadd(const ComplexTensor& a, const ComplexTensor& b) {
  return broadcast_op(a, b, [](Complex x, Complex y) { return x + y; }, "cadd");
}

ComplexTensor cmul(const ComplexTensor& a, const ComplexTensor& b) {
  return broadcast_op(a, b, [](Complex x, Complex y) { return x * y; }, "cmul");
}

ComplexTensor cscale(const ComplexTensor& a, Complex s) {
  ComplexTensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Complex cexp(Complex z) {
  double m = std::exp(z.real());
  return Complex(m * std::cos(z.imag()), m * std::sin(z.imag()));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: dimension mismatch " + shape_to_string(a.shape) +
                                " vs " + shape_to_string(b.shape));
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* outr = &out.data[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a.data[i * k + p];
      const T* br = &b.data[p * n];
      for (std::size_t j = 0; j < n; ++j) outr[j] += av * br[j];
    }
  }
  return out;
}

template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<Complex> matmul(const Tensor<Complex>&, const Tensor<Complex>&);

namespace {

// Fixed-order 8-lane reduction: vectorizes under strict FP semantics and the
// summation order never depends on the build.
inline double lane_dot(const double* a, const double* b, std::size_t n) {
  double lanes[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t k = 0; k < 8; ++k) lanes[k] += a[j + k] * b[j + k];
  double acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

inline void lane_dot2(const double* a, const double* b, const double* c, std::size_t n,
                      double& out_b, double& out_c) {
  double lb[4] = {}, lc[4] = {};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4)
    for (std::size_t k = 0; k < 4; ++k) {
      lb[k] += a[j + k] * b[j + k];
      lc[k] += a[j + k] * c[j + k];
    }
  out_b = (lb[0] + lb[1]) + (lb[2] + lb[3]);
  out_c = (lc[0] + lc[1]) + (lc[2] + lc[3]);
  for (; j < n; ++j) {
    out_b += a[j] * b[j];
    out_c += a[j] * c[j];
  }
}

// Per-thread scratch for the planar complex kernels.
thread_local std::vector<double> tl_re, tl_im;

}  // namespace

template <typename T>
void matvec_accumulate(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out) {
  const std::size_t m = w.shape[0], n = w.shape[1];
  if (v.size() != n || out.size() != m)
    throw std::invalid_argument("matvec: dimension mismatch " + shape_to_string(w.shape) +
                                " vs " + shape_to_string(v.shape));
  for (std::size_t i = 0; i < m; ++i)
    out.data[i] += lane_dot(&w.data[i * n], v.data.data(), n);
}

// Complex states ride real weights everywhere in the dynamics, so the complex
// kernels split the vector into planar components and run two fused real
// accumulations per row.
template <>
void matvec_accumulate(const RealTensor& w, const Tensor<Complex>& v, Tensor<Complex>& out) {
  const std::size_t m = w.shape[0], n = w.shape[1];
  if (v.size() != n || out.size() != m)
    throw std::invalid_argument("matvec: dimension mismatch " + shape_to_string(w.shape) +
                                " vs " + shape_to_string(v.shape));
  tl_re.assign(n, 0.0);
  tl_im.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    tl_re[j] = v.data[j].real();
    tl_im[j] = v.data[j].imag();
  }
  for (std::size_t i = 0; i < m; ++i) {
    double ar, ai;
    lane_dot2(&w.data[i * n], tl_re.data(), tl_im.data(), n, ar, ai);
    out.data[i] += Complex(ar, ai);
  }
}

template <typename T>
void matvec_into(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out) {
  std::fill(out.data.begin(), out.data.end(), T{});
  matvec_accumulate(w, v, out);
}

template <typename T>
void matvec_transpose_accumulate(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out) {
  const std::size_t m = w.shape[0], n = w.shape[1];
  if (v.size() != m || out.size() != n)
    throw std::invalid_argument("matvec_transpose: dimension mismatch " +
                                shape_to_string(w.shape) + " vs " + shape_to_string(v.shape));
  for (std::size_t i = 0; i < m; ++i) {
    const double* wr = &w.data[i * n];
    const T vi = v.data[i];
    for (std::size_t j = 0; j < n; ++j) out.data[j] += wr[j] * vi;
  }
}

template <>
void matvec_transpose_accumulate(const RealTensor& w, const Tensor<Complex>& v,
                                 Tensor<Complex>& out) {
  const std::size_t m = w.shape[0], n = w.shape[1];
  if (v.size() != m || out.size() != n)
    throw std::invalid_argument("matvec_transpose: dimension mismatch " +
                                shape_to_string(w.shape) + " vs " + shape_to_string(v.shape));
  tl_re.assign(n, 0.0);
  tl_im.assign(n, 0.0);
  double* re = tl_re.data();
  double* im = tl_im.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* wr = &w.data[i * n];
    const double vr = v.data[i].real(), vi = v.data[i].imag();
    for (std::size_t j = 0; j < n; ++j) {
      re[j] += wr[j] * vr;
      im[j] += wr[j] * vi;
    }
  }
  for (std::size_t j = 0; j < n; ++j) out.data[j] += Complex(re[j], im[j]);
}

template <typename T>
void matvec_transpose_into(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out) {
  std::fill(out.data.begin(), out.data.end(), T{});
  matvec_transpose_accumulate(w, v, out);
}

template void matvec_into(const RealTensor&, const Tensor<double>&, Tensor<double>&);
template void matvec_into(const RealTensor&, const Tensor<Complex>&, Tensor<Complex>&);
template void matvec_accumulate(const RealTensor&, const Tensor<double>&, Tensor<double>&);
template void matvec_accumulate(const RealTensor&, const Tensor<Complex>&, Tensor<Complex>&);
template void matvec_transpose_into(const RealTensor&, const Tensor<double>&, Tensor<double>&);
template void matvec_transpose_into(const RealTensor&, const Tensor<Complex>&, Tensor<Complex>&);
template void matvec_transpose_accumulate(const RealTensor&, const Tensor<double>&,
                                          Tensor<double>&);
template void matvec_transpose_accumulate(const RealTensor&, const Tensor<Complex>&,
                                          Tensor<Complex>&);

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                            std::size_t padding) {
  if (in + 2 * padding < k) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return (in + 2 * padding - k) / stride + 1;
}

template <typename TW, typename T>
Tensor<T> conv2d(const Tensor<TW>& w, const Tensor<T>& x, std::size_t stride,
                 std::size_t padding) {
  if (w.rank() != 4 || x.rank() != 3 || w.shape[1] != x.shape[0])
    throw std::invalid_argument("conv2d: incompatible channel counts, kernel " +
                                shape_to_string(w.shape) + " input " + shape_to_string(x.shape));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t co = w.shape[0], ci = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const std::size_t h = x.shape[1], wd = x.shape[2];
  const std::size_t oh = conv_out_extent(h, kh, stride, padding);
  const std::size_t ow = conv_out_extent(wd, kw, stride, padding);
  Tensor<T> out(Shape{co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          const TW wv = w.data[((o * ci + c) * kh + u) * kw + v];
          for (std::size_t i = 0; i < oh; ++i) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) -
                                     static_cast<std::ptrdiff_t>(padding);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t j = 0; j < ow; ++j) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * stride + v) -
                                       static_cast<std::ptrdiff_t>(padding);
              if (s < 0 || s >= static_cast<std::ptrdiff_t>(wd)) continue;
              out.at(o, i, j) += wv * x.at(c, r, s);
            }
          }
        }
  return out;
}

template <typename TW, typename T>
Tensor<T> conv2d_transpose(const Tensor<TW>& w, const Tensor<T>& y, std::size_t stride,
                           std::size_t padding, std::size_t in_h, std::size_t in_w) {
  if (w.rank() != 4 || y.rank() != 3 || w.shape[0] != y.shape[0])
    throw std::invalid_argument("conv2d_transpose: incompatible channel counts, kernel " +
                                shape_to_string(w.shape) + " input " + shape_to_string(y.shape));
  const std::size_t co = w.shape[0], ci = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const std::size_t oh = y.shape[1], ow = y.shape[2];
  Tensor<T> out(Shape{ci, in_h, in_w});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          const TW wv = w.data[((o * ci + c) * kh + u) * kw + v];
          for (std::size_t i = 0; i < oh; ++i) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) -
                                     static_cast<std::ptrdiff_t>(padding);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(in_h)) continue;
            for (std::size_t j = 0; j < ow; ++j) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * stride + v) -
                                       static_cast<std::ptrdiff_t>(padding);
              if (s < 0 || s >= static_cast<std::ptrdiff_t>(in_w)) continue;
              out.at(c, r, s) += wv * y.at(o, i, j);
            }
          }
        }
  return out;
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, std::size_t stride,
                             std::size_t padding, std::size_t kh, std::size_t kw) {
  const std::size_t ci = x.shape[0], h = x.shape[1], wd = x.shape[2];
  const std::size_t co = g.shape[0], oh = g.shape[1], ow = g.shape[2];
  Tensor<T> out(Shape{co, ci, kh, kw});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          T acc{};
          for (std::size_t i = 0; i < oh; ++i) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) -
                                     static_cast<std::ptrdiff_t>(padding);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t j = 0; j < ow; ++j) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j * stride + v) -
                                       static_cast<std::ptrdiff_t>(padding);
              if (s < 0 || s >= static_cast<std::ptrdiff_t>(wd)) continue;
              acc += x.at(c, r, s) * g.at(o, i, j);
            }
          }
          out.data[((o * ci + c) * kh + u) * kw + v] = acc;
        }
  return out;
}

template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, std::size_t,
                               std::size_t);
template Tensor<Complex> conv2d(const Tensor<Complex>&, const Tensor<Complex>&, std::size_t,
                                std::size_t);
template Tensor<Complex> conv2d(const Tensor<double>&, const Tensor<Complex>&, std::size_t,
                                std::size_t);
template Tensor<double> conv2d_transpose(const Tensor<double>&, const Tensor<double>&,
                                         std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<Complex> conv2d_transpose(const Tensor<Complex>&, const Tensor<Complex>&,
                                          std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<Complex> conv2d_transpose(const Tensor<double>&, const Tensor<Complex>&,
                                          std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<double> conv2d_weight_grad(const Tensor<double>&, const Tensor<double>&,
                                           std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<Complex> conv2d_weight_grad(const Tensor<Complex>&, const Tensor<Complex>&,
                                            std::size_t, std::size_t, std::size_t, std::size_t);

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("dot: shape mismatch " + shape_to_string(a.shape) + " vs " +
                                shape_to_string(b.shape));
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template double dot(const Tensor<double>&, const Tensor<double>&);
template Complex dot(const Tensor<Complex>&, const Tensor<Complex>&);

double max_abs(const ComplexTensor& a) {
  double m = 0;
  for (const Complex& v : a.data) m = std::max(m, std::max(std::abs(v.real()), std::abs(v.imag())));
  return m;
}

double max_abs(const RealTensor& a) {
  double m = 0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace holoprop
