#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace holoprop {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);

/// Dense row-major tensor. The only container the rest of the library uses.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{});

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t extent(std::size_t d) const { return shape[d]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  T& at(std::size_t c, std::size_t i, std::size_t j) {
    return data[(c * shape[1] + i) * shape[2] + j];
  }
  const T& at(std::size_t c, std::size_t i, std::size_t j) const {
    return data[(c * shape[1] + i) * shape[2] + j];
  }

  /// All components finite. A tensor that fails this is considered diverged.
  bool finite() const;
};

using RealTensor = Tensor<double>;
using ComplexTensor = Tensor<Complex>;

std::size_t shape_size(const Shape& s);

ComplexTensor to_complex(const RealTensor& a);
RealTensor real_part(const ComplexTensor& a);
RealTensor imag_part(const ComplexTensor& a);
bool is_real(const ComplexTensor& a);  // every imaginary component exactly zero

// Elementwise arithmetic. Shapes must be equal or one operand a single scalar.
ComplexTensor cadd(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor cmul(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor cscale(const ComplexTensor& a, Complex s);

Complex cexp(Complex z);

// Matrix product, a: [m x k], b: [k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// w: [m x n] real, v: [n]; result [m]. Mixed real/complex kernels used by the
// network dynamics (weights stay real, states may be complex).
template <typename T>
void matvec_into(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out);
template <typename T>
void matvec_transpose_into(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out);
template <typename T>
void matvec_accumulate(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out);
template <typename T>
void matvec_transpose_accumulate(const RealTensor& w, const Tensor<T>& v, Tensor<T>& out);

// 2-D cross-correlation, w: [Cout x Cin x kh x kw], x: [Cin x H x W]. The
// kernel may be real while the input is complex.
template <typename TW, typename T>
Tensor<T> conv2d(const Tensor<TW>& w, const Tensor<T>& x, std::size_t stride,
                 std::size_t padding);

// Exact adjoint of conv2d with respect to x: maps the output space back to an
// input of extent in_h x in_w, so that <conv2d(w,x), y> == <x, conv2d_transpose(w,y)>.
template <typename TW, typename T>
Tensor<T> conv2d_transpose(const Tensor<TW>& w, const Tensor<T>& y, std::size_t stride,
                           std::size_t padding, std::size_t in_h, std::size_t in_w);

// Gradient of <conv2d(w,x), g> with respect to w.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, std::size_t stride,
                             std::size_t padding, std::size_t kh, std::size_t kw);

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                            std::size_t padding);

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b);

double max_abs(const ComplexTensor& a);
double max_abs(const RealTensor& a);

}  // namespace holoprop
