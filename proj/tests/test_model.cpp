#include <cmath>

#include "doctest.h"
#include "holoprop/model.hpp"
#include "holoprop/rng.hpp"

using namespace holoprop;

namespace {
const double kSigZero = 1.0 / (1.0 + std::exp(2.0));  // value shared by both activations at 0
}

TEST_CASE("shifted sigmoid values") {
  ComplexTensor z(Shape{3});
  z[0] = Complex(0.5, 0);
  z[1] = Complex(0, 0);
  z[2] = Complex(0.5, 0);
  auto s = shifted_sigmoid(z);
  CHECK(s[0].real() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s[1].real() == doctest::Approx(kSigZero).epsilon(1e-12));
  CHECK(std::abs(s[1].real() - 0.11920) < 1e-5);
  // real closure: exactly real in, exactly real out
  CHECK(s[2].imag() == 0.0);
}

TEST_CASE("dsilu values") {
  ComplexTensor z(Shape{3});
  z[0] = Complex(1, 0);
  z[1] = Complex(0, 0);
  z[2] = Complex(2, 0);
  auto d = dsilu(z);
  CHECK(d[0].real() == doctest::Approx(0.5).epsilon(1e-12));     // 0.5 sig(1) + 0.5 sig(-1)
  CHECK(d[1].real() == doctest::Approx(kSigZero).epsilon(1e-12));
  CHECK(d[2].real() == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("activation pole guard flags divergence") {
  // shifted sigmoid has poles at z = 1/2 - i pi (2k+1) / 4
  Complex pole(0.5, -M_PI / 4.0);
  Complex v = activate(Activation::ShiftedSigmoid, pole);
  CHECK((std::isnan(v.real()) || std::isnan(v.imag())));
}

// Numerical Wirtinger derivative: d/dz̄ = (d/dx + i d/dy)/2 vanishes for
// holomorphic maps (Cauchy-Riemann).
TEST_CASE("holomorphy probe for both activations") {
  const double h = 1e-5;
  for (auto act : {Activation::ShiftedSigmoid, Activation::DSiLU}) {
    std::size_t checked = 0;
    for (std::size_t trial = 0; checked < 100; ++trial) {
      Complex z(2.0 * rng::uniform(1, {std::uint64_t(act), trial, 0}) - 1.0,
                2.0 * rng::uniform(1, {std::uint64_t(act), trial, 1}) - 1.0);
      // stay away from the pole rows Im(z) ~ +-pi/4 for the shifted sigmoid
      if (act == Activation::ShiftedSigmoid && std::abs(std::abs(z.imag()) - M_PI / 4.0) < 0.15)
        continue;
      auto f = [&](Complex w) { return activate(act, w); };
      Complex ddx = (f(z + h) - f(z - h)) / (2.0 * h);
      Complex ddy = (f(z + Complex(0, h)) - f(z - Complex(0, h))) / (2.0 * h);
      Complex wirtinger_bar = 0.5 * (ddx + Complex(0, 1) * ddy);
      CHECK(std::abs(wirtinger_bar) < 1e-6);
      ++checked;
    }
  }
}

TEST_CASE("softmax pooling basics") {
  ComplexTensor x(Shape{1, 2, 2});
  SUBCASE("equal window returns the common value") {
    for (auto& v : x.data) v = Complex(3.25, -0.5);
    auto pr = softmax_pool(x, 2, 2, 0.7);
    CHECK(std::abs(pr.pooled[0] - Complex(3.25, -0.5)) < 1e-12);
    Complex wsum{};
    for (auto& w : pr.weights.data) wsum += w;
    CHECK(std::abs(wsum - Complex(1, 0)) < 1e-12);
  }
  SUBCASE("small tau approaches max, large tau the mean") {
    x.data = {Complex(0), Complex(10), Complex(0), Complex(0)};
    auto hot = softmax_pool(x, 2, 2, 0.01);
    CHECK(std::abs(hot.pooled[0] - Complex(10, 0)) < 1e-9);
    auto flat = softmax_pool(x, 2, 2, 1e6);
    CHECK(std::abs(flat.pooled[0] - Complex(2.5, 0)) < 1e-4);
  }
  SUBCASE("tau limits on integer windows") {
    x.data = {Complex(1), Complex(2), Complex(3), Complex(4)};
    auto mean = softmax_pool(x, 2, 2, 1e9);
    // leading deviation from the mean is Var(x)/tau = 1.25e-9 here
    CHECK(std::abs(mean.pooled[0] - Complex(2.5, 0)) < 3e-9);
    auto mx = softmax_pool(x, 2, 2, 1e-3);
    CHECK(std::abs(mx.pooled[0] - Complex(4, 0)) < 1e-9);
  }
  SUBCASE("tau must be positive") {
    CHECK_THROWS_AS(softmax_pool(x, 2, 2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax_pool(x, 2, 2, -1.0), std::invalid_argument);
  }
}

TEST_CASE("softmax unpooling redistributes by cached weights") {
  ComplexTensor x(Shape{1, 2, 2});
  x.data = {Complex(1), Complex(2), Complex(3), Complex(4)};
  auto pr = softmax_pool(x, 2, 2, 0.5);
  auto up = softmax_unpool(pr.pooled, pr.weights, 2, 2);
  // weights sum to 1 per window, so the unpooled cells sum back to the value
  Complex sum{};
  for (const auto& v : up.data) sum += v;
  CHECK(std::abs(sum - pr.pooled[0]) < 1e-12);

  // tau -> 0 pushes all mass onto the arg-max cell
  auto hot = softmax_pool(x, 2, 2, 1e-3);
  auto uphot = softmax_unpool(hot.pooled, hot.weights, 2, 2);
  CHECK(std::abs(uphot.data[3] - hot.pooled[0]) < 1e-9);
  CHECK(std::abs(uphot.data[0]) < 1e-9);

  ComplexTensor badweights(Shape{1, 4, 4});
  CHECK_THROWS_AS(softmax_unpool(pr.pooled, badweights, 2, 2), std::invalid_argument);
}

TEST_CASE("hopfield energy hand sums") {
  SUBCASE("two units, identity activation") {
    RealTensor w(Shape{2, 2});
    w.at(0, 1) = 1.0;
    w.at(1, 0) = 1.0;
    RealTensor b(Shape{2});
    ComplexTensor s(Shape{2});
    s[0] = 1.0;
    s[1] = 1.0;
    CHECK(std::abs(hopfield_energy(w, b, s, Activation::Identity)) < 1e-15);  // 1 - 1
  }
  SUBCASE("zero state, sigmoid: only the coupling term survives") {
    RealTensor w(Shape{3, 3});
    double vals[3][3] = {{0, 0.3, -0.2}, {0.3, 0, 0.5}, {-0.2, 0.5, 0}};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) w.at(i, j) = vals[i][j];
    RealTensor b(Shape{3});
    ComplexTensor s(Shape{3});
    const double o = kSigZero;
    const double hand = -0.5 * (0.3 + 0.3 + (-0.2) + (-0.2) + 0.5 + 0.5) * o * o;
    auto e = hopfield_energy(w, b, s, Activation::ShiftedSigmoid);
    CHECK(e.real() == doctest::Approx(hand).epsilon(1e-12));
    CHECK(e.imag() == 0.0);
  }
  SUBCASE("zero couplings: pure quadratic") {
    RealTensor w(Shape{2, 2}), b(Shape{2});
    ComplexTensor s(Shape{2});
    s[0] = Complex(2, 0);
    s[1] = Complex(-1, 0);
    CHECK(hopfield_energy(w, b, s, Activation::ShiftedSigmoid).real() ==
          doctest::Approx(2.5).epsilon(1e-15));
  }
}

TEST_CASE("cross entropy basics") {
  RealTensor y = one_hot(1, 3);
  ComplexTensor s(Shape{3});
  s[0] = 0.0;
  s[1] = 1.0;
  s[2] = 0.0;
  CHECK(std::abs(cross_entropy(s, y)) < 1e-15);

  for (auto& v : s.data) v = Complex(1.0 / 3.0, 0);
  CHECK(cross_entropy(s, y).real() == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  s[1] = 0.0;
  CHECK_THROWS_AS(cross_entropy(s, y), std::domain_error);
}

// F = E + beta*loss is linear in beta at fixed state.
TEST_CASE("total energy is linear in beta") {
  RealTensor w(Shape{2, 2});
  w.at(0, 1) = 0.4;
  w.at(1, 0) = 0.4;
  RealTensor b(Shape{2});
  b[0] = 0.1;
  ComplexTensor s(Shape{2});
  s[0] = Complex(0.3, 0.1);
  s[1] = Complex(-0.2, 0.05);
  ComplexTensor readout(Shape{2});
  readout[0] = Complex(0.7, 0.02);
  readout[1] = Complex(0.3, -0.02);
  RealTensor y = one_hot(0, 2);
  const Complex b1(0.3, 0.2), b2(-0.1, 0.45);
  const auto act = Activation::ShiftedSigmoid;
  Complex f1 = total_energy(w, b, s, act, b1, readout, y);
  Complex f2 = total_energy(w, b, s, act, b2, readout, y);
  Complex f0 = total_energy(w, b, s, act, Complex{}, readout, y);
  Complex lhs = f1 + f2 - 2.0 * f0;
  Complex rhs = (b1 + b2) * cross_entropy(readout, y);
  CHECK(std::abs(lhs - rhs) < 1e-12);
  CHECK(std::abs(f0 - hopfield_energy(w, b, s, act)) == 0.0);
}

TEST_CASE("network spec validation") {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {6, 4};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);  // no hidden layer
  spec.layer_sizes = {6, 4, 4, 4};
  CHECK_NOTHROW(spec.validate());
  spec.tau = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("glorot init is reproducible and bounded") {
  NetworkSpec spec;
  spec.layer_sizes = {6, 4, 4, 4};
  auto net1 = LayeredNet::glorot(spec, 42);
  auto net2 = LayeredNet::glorot(spec, 42);
  auto net3 = LayeredNet::glorot(spec, 43);
  CHECK(net1.param_tensors()[0].data == net2.param_tensors()[0].data);
  CHECK(net1.param_tensors()[0].data != net3.param_tensors()[0].data);
  const double bound = std::sqrt(6.0 / (6 + 4));
  for (double v : net1.param_tensors()[0].data) CHECK(std::abs(v) <= bound);
  for (double v : net1.param_tensors()[1].data) CHECK(v == 0.0);  // biases zero
}
