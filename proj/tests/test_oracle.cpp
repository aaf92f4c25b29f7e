#include <cmath>

#include "doctest.h"
#include "holoprop/estimators.hpp"
#include "holoprop/oracle.hpp"
#include "support.hpp"

using namespace holoprop;
using namespace holoprop::testing;

TEST_CASE("toy adjoint is exact") {
  ToyModel toy(2.0);
  RealTensor x, y(Shape{1});
  y[0] = 1.0;
  auto g = unrolled_adjoint_gradient(toy, x, y, 5);
  CHECK(g.grads[0][0] == 1.0);
}

TEST_CASE("adjoint and finite differences agree on the small mlp") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto adj = unrolled_adjoint_gradient(net, x, y, 800);
  CHECK(adj.converged);
  SettleConfig cfg = tight_settle(2000, 1e-12);
  auto fd = finite_difference_gradient(net, x, y, 1e-5, cfg, nullptr, true, 2);
  CHECK(fd.converged);  // Richardson check passed everywhere
  double num = 0, den = 0;
  for (std::size_t p = 0; p < fd.grads.size(); ++p)
    for (std::size_t i = 0; i < fd.grads[p].size(); ++i) {
      num += std::pow(fd.grads[p][i] - adj.grads[p][i], 2);
      den += std::pow(fd.grads[p][i], 2);
    }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("finite differences are exact on the toy's quadratic loss") {
  ToyModel toy(2.0);
  RealTensor x, y(Shape{1});
  y[0] = 1.0;
  auto cfg = tight_settle();
  auto fd = finite_difference_gradient(toy, x, y, 1e-5, cfg);
  CHECK(std::abs(fd.grads[0][0] - 1.0) < 1e-9);
}

TEST_CASE("output bias gradient equals readout error at the fixed point") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto cfg = tight_settle(2000, 1e-12);
  auto free = settle_real(net, x, 0.0, y, cfg);
  REQUIRE(free.converged);
  auto adj = unrolled_adjoint_gradient(net, x, y, 800);
  const RealTensor& readout = free.state.back();
  const RealTensor& gb_out = adj.grads.back();
  for (std::size_t k = 0; k < gb_out.size(); ++k)
    CHECK(gb_out[k] == doctest::Approx(readout[k] - y[k]).epsilon(1e-8));
}

TEST_CASE("cosine similarity basics") {
  std::vector<RealTensor> a = {RealTensor(Shape{2})}, b = {RealTensor(Shape{2})};
  a[0][0] = 1.0;
  a[0][1] = 2.0;
  b[0] = a[0];
  auto same = cosine_similarity(a, b);
  CHECK(same.total == doctest::Approx(1.0).epsilon(1e-15));

  b[0][0] = -2.0;
  b[0][1] = 1.0;
  CHECK(cosine_similarity(a, b).total == doctest::Approx(0.0).epsilon(1e-15));

  for (auto& v : b[0].data) v = 0.0;
  b[0][0] = 2.0;
  b[0][1] = 4.0;
  CHECK(cosine_similarity(a, b).total == doctest::Approx(1.0).epsilon(1e-15));

  std::vector<RealTensor> z1 = {RealTensor(Shape{2})}, z2 = {RealTensor(Shape{2})};
  auto undef = cosine_similarity(z1, z2);
  CHECK(!undef.total_defined);
  CHECK(!undef.layer_defined[0]);
}

// d/dbeta of dF/dtheta at beta = 0 along the real axis equals the loss
// gradient (the complex-differentiation identity restricted to the reals).
TEST_CASE("cross-derivative identity at the free fixed point") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto cfg = tight_settle(3000, 1e-13);
  const double h = 1e-4;
  auto plus = settle_real(net, x, h, y, cfg);
  auto minus = settle_real(net, x, -h, y, cfg);
  REQUIRE(plus.converged);
  REQUIRE(minus.converged);
  auto gp = net.grad_f_theta(plus.state, x, h, y);
  auto gm = net.grad_f_theta(minus.state, x, -h, y);
  auto oracle = unrolled_adjoint_gradient(net, x, y, 1500);
  double num = 0, den = 0;
  for (std::size_t p = 0; p < gp.size(); ++p)
    for (std::size_t i = 0; i < gp[p].size(); ++i) {
      const double fd = (gp[p][i] - gm[p][i]) / (2.0 * h);
      num += std::pow(fd - oracle.grads[p][i], 2);
      den += std::pow(oracle.grads[p][i], 2);
    }
  CHECK(std::sqrt(num / den) < 1e-5);
}

// The cnn reverse pass threads through conv adjoints, the pooling jacobian
// and the cached-weight unpooling; finite differences catch any slip.
TEST_CASE("adjoint and finite differences agree on the small cnn") {
  auto net = small_cnn();
  auto x = small_cnn_input();
  auto y = one_hot(1, 4);
  auto adj = unrolled_adjoint_gradient(net, x, y, 400);
  CHECK(adj.converged);
  SettleConfig cfg = tight_settle(1500, 1e-12);
  auto coords = sample_coordinates(net.param_tensors(), 60, 99);
  auto fd = finite_difference_gradient(net, x, y, 1e-5, cfg, &coords, true, 2);
  CHECK(fd.converged);
  double num = 0, den = 0;
  for (const auto& c : coords) {
    const double f = fd.grads[c.tensor][c.element];
    const double a = adj.grads[c.tensor][c.element];
    num += (f - a) * (f - a);
    den += f * f;
  }
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("hep tracks the oracle on the small cnn") {
  auto net = small_cnn();
  auto x = small_cnn_input();
  auto y = one_hot(1, 4);
  auto oracle = unrolled_adjoint_gradient(net, x, y, 400);
  auto cfg = tight_settle(1200, 1e-12);
  auto est = hep_estimate(net, x, y, NudgePath::circle(0.2, 8), cfg, cfg);
  auto rep = cosine_similarity(est.grads, oracle.grads);
  CHECK(rep.total > 0.99);
}

TEST_CASE("fd step outside the sane window is rejected") {
  ToyModel toy(2.0);
  RealTensor x, y(Shape{1});
  y[0] = 1.0;
  auto cfg = tight_settle();
  CHECK_THROWS_AS(finite_difference_gradient(toy, x, y, 1e-2, cfg), std::invalid_argument);
  CHECK_THROWS_AS(finite_difference_gradient(toy, x, y, 1e-9, cfg), std::invalid_argument);
}

TEST_CASE("coordinate sampling is deterministic and in range") {
  auto net = small_mlp();
  auto c1 = sample_coordinates(net.param_tensors(), 10, 77);
  auto c2 = sample_coordinates(net.param_tensors(), 10, 77);
  REQUIRE(c1.size() == 10);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].tensor == c2[i].tensor);
    CHECK(c1[i].element == c2[i].element);
    CHECK(c1[i].tensor < net.param_tensors().size());
    CHECK(c1[i].element < net.param_tensors()[c1[i].tensor].size());
  }
}
