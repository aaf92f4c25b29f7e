#include <cmath>
#include <complex>

#include "doctest.h"
#include "holoprop/rng.hpp"
#include "holoprop/tensor.hpp"

using namespace holoprop;

TEST_CASE("complex elementwise arithmetic") {
  ComplexTensor a(Shape{2});
  a[0] = Complex(1, 2);
  a[1] = Complex(0, 1);
  ComplexTensor b(Shape{2});
  b[0] = Complex(3, -1);
  b[1] = Complex(0, 1);

  auto prod = cmul(a, b);
  CHECK(prod[0] == Complex(5, 5));  // (1+2i)(3-i) = 5+5i
  CHECK(prod[1] == Complex(-1, 0));

  ComplexTensor zero(Shape{1});
  auto same = cadd(a, zero);
  CHECK(same[0] == a[0]);
  CHECK(same[1] == a[1]);

  auto rotated = cscale(cscale(a, Complex(0, 1)), Complex(0, 1));
  CHECK(rotated[0] == -a[0]);
  CHECK(rotated[1] == -a[1]);
}

TEST_CASE("shape mismatch names both shapes") {
  ComplexTensor a(Shape{2, 3});
  ComplexTensor b(Shape{4});
  CHECK_THROWS_WITH_AS(cadd(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cadd(a, b), doctest::Contains("[4]"), std::invalid_argument);
}

TEST_CASE("matmul basics") {
  ComplexTensor eye(Shape{2, 2});
  eye.at(0, 0) = 1;
  eye.at(1, 1) = 1;
  ComplexTensor x(Shape{2, 1});
  x[0] = Complex(3, 1);
  x[1] = Complex(-2, 0.5);
  auto ix = matmul(eye, x);
  CHECK(ix[0] == x[0]);
  CHECK(ix[1] == x[1]);

  ComplexTensor perm(Shape{2, 2});
  perm.at(0, 1) = 1;
  perm.at(1, 0) = 1;
  auto px = matmul(perm, x);
  CHECK(px[0] == x[1]);
  CHECK(px[1] == x[0]);

  ComplexTensor a(Shape{1, 1}), b(Shape{1, 1});
  a[0] = Complex(1, 1);
  b[0] = Complex(1, -1);
  CHECK(matmul(a, b)[0] == Complex(2, 0));

  CHECK_THROWS_AS(matmul(a, x), std::invalid_argument);
}

TEST_CASE("cexp basics and roots of unity") {
  CHECK(cexp(Complex(0, 0)) == Complex(1, 0));
  CHECK(std::abs(cexp(Complex(0, M_PI)) - Complex(-1, 0)) < 1e-15);

  Complex sum{};
  for (int k = 0; k < 5; ++k) sum += cexp(Complex(0, 2.0 * M_PI * k / 5.0));
  CHECK(std::abs(sum) < 1e-14);
}

// If N divides p the sum of the N-th roots raised to p is N, otherwise 0.
TEST_CASE("roots-of-unity sums over all N and p") {
  for (std::size_t n = 2; n <= 16; ++n) {
    for (std::size_t p = 1; p <= 3 * n; ++p) {
      Complex sum{};
      for (std::size_t k = 0; k < n; ++k)
        sum += cexp(Complex(0, 2.0 * M_PI * double(p) * double(k) / double(n)));
      if (p % n == 0)
        CHECK(std::abs(sum - Complex(double(n), 0)) < 1e-12);
      else
        CHECK(std::abs(sum) < 1e-12);
    }
  }
}

TEST_CASE("conv2d identity and zeros") {
  ComplexTensor w(Shape{1, 1, 1, 1});
  w[0] = 1.0;
  ComplexTensor x(Shape{1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = Complex(double(i), -double(i));
  auto y = conv2d(w, x, 1, 0);
  REQUIRE(y.shape == Shape{1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == x[i]);

  ComplexTensor zero(Shape{1, 3, 3});
  ComplexTensor k(Shape{2, 1, 2, 2});
  for (auto& v : k.data) v = Complex(0.3, 0.1);
  auto z = conv2d(k, zero, 1, 1);
  for (const auto& v : z.data) CHECK(v == Complex(0, 0));
}

// Oracle: direct evaluation of both inner products on a random instance.
TEST_CASE("conv2d_transpose is the exact adjoint of conv2d") {
  const std::uint64_t seed = 7;
  RealTensor w(Shape{4, 3, 3, 3});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng::gaussian(seed, {1, i});
  RealTensor x(Shape{3, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng::gaussian(seed, {2, i});

  for (std::size_t stride : {std::size_t(1), std::size_t(2)}) {
    for (std::size_t pad : {std::size_t(0), std::size_t(1)}) {
      auto cx = conv2d(w, x, stride, pad);
      RealTensor y(cx.shape);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng::gaussian(seed, {3, stride, pad, i});
      auto xt = conv2d_transpose(w, y, stride, pad, 5, 5);
      const double lhs = dot(cx, y);
      const double rhs = dot(x, xt);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0));
    }
  }
}

TEST_CASE("conv2d rejects mismatched channel counts") {
  ComplexTensor w(Shape{1, 2, 3, 3});
  ComplexTensor x(Shape{3, 5, 5});
  CHECK_THROWS_AS(conv2d(w, x, 1, 1), std::invalid_argument);
}

// Closure of the real subfield, asserted bit-exactly.
TEST_CASE("real inputs stay exactly real through add, mul, matmul") {
  const std::uint64_t seed = 11;
  ComplexTensor a(Shape{4, 4}), b(Shape{4, 4});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = Complex(rng::gaussian(seed, {1, i}), 0.0);
    b[i] = Complex(rng::gaussian(seed, {2, i}), 0.0);
  }
  CHECK(is_real(cadd(a, b)));
  CHECK(is_real(cmul(a, b)));
  CHECK(is_real(matmul(a, b)));
}

TEST_CASE("divergence flag on non-finite components") {
  ComplexTensor a(Shape{2});
  CHECK(a.finite());
  a[1] = Complex(0, std::numeric_limits<double>::infinity());
  CHECK(!a.finite());
}
