#include <cmath>

#include "doctest.h"
#include "holoprop/dynamics.hpp"
#include "support.hpp"

using namespace holoprop;
using namespace holoprop::testing;

TEST_CASE("nudge path invariants") {
  CHECK_THROWS_AS(NudgePath::circle(0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(NudgePath::circle(-0.1, 4), std::invalid_argument);
  auto path = NudgePath::circle(0.25, 8);
  for (std::size_t k = 0; k < 8; ++k)
    CHECK(std::abs(std::abs(path.point(k)) - 0.25) < 1e-15);
  CHECK(std::abs(path.at_time(0.0, 50.0) - Complex(0.25, 0)) < 1e-15);
  CHECK(std::abs(path.at_time(25.0, 50.0) - Complex(-0.25, 0)) < 1e-12);
}

TEST_CASE("residual norm") {
  CState a = {ComplexTensor(Shape{2})};
  CState b = {ComplexTensor(Shape{2})};
  CHECK(residual_norm(a, b) == 0.0);
  b[0][0] = Complex(3, 0);
  b[0][1] = Complex(0, 4);
  CHECK(residual_norm(a, b) == doctest::Approx(5.0).epsilon(1e-15));
  b[0][0] = Complex(std::numeric_limits<double>::infinity(), 0);
  CHECK(std::isinf(residual_norm(a, b)));
}

// Closed forms: free point s* = theta, nudged s*(beta) = (theta + beta y)/(1 + beta).
TEST_CASE("toy model fixed points") {
  ToyModel toy(2.0);
  RealTensor x, y(Shape{1});
  y[0] = 1.0;
  auto cfg = tight_settle();

  auto free = settle_real(toy, x, 0.0, y, cfg);
  CHECK(free.converged);
  CHECK(free.state[0][0] == doctest::Approx(2.0).epsilon(1e-14));

  auto nudged = settle_real(toy, x, 0.5, y, cfg);
  CHECK(nudged.state[0][0] == doctest::Approx(5.0 / 3.0).epsilon(1e-12));

  auto complex_nudged = settle(toy, x, Complex(0.0, 0.3), y, cfg);
  Complex expect = (2.0 + Complex(0, 0.3)) / (1.0 + Complex(0, 0.3));
  CHECK(std::abs(complex_nudged.state[0][0] - expect) < 1e-12);
}

TEST_CASE("toy step reaches the fixed point in one step") {
  ToyModel toy(2.0);
  RealTensor x, y(Shape{1});
  y[0] = 1.0;
  SettleConfig cfg;
  cfg.max_steps = 1;
  cfg.residual_tol = 0.0;
  auto res = settle_real(toy, x, 0.0, y, cfg);
  CHECK(res.state[0][0] == 2.0);
}

TEST_CASE("repeated stepping is deterministic") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  SettleConfig cfg;
  cfg.max_steps = 50;
  auto a = settle(net, x, Complex(0.05, 0.02), y, cfg);
  auto b = settle(net, x, Complex(0.05, 0.02), y, cfg);
  for (std::size_t l = 0; l < a.state.size(); ++l)
    for (std::size_t k = 0; k < a.state[l].size(); ++k) CHECK(a.state[l][k] == b.state[l][k]);
}

TEST_CASE("zero-weight sigmoid net settles to sigma(0) in one step") {
  NetworkSpec spec = small_mlp_spec();
  LayeredNet net(spec, [&] {
    auto params = LayeredNet::glorot(spec, 1).param_tensors();
    for (auto& t : params)
      for (auto& v : t.data) v = 0.0;
    return params;
  }());
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  SettleConfig cfg;
  cfg.max_steps = 1;
  auto res = settle_real(net, x, 0.0, y, cfg);
  const double sig0 = 1.0 / (1.0 + std::exp(2.0));
  for (std::size_t l = 0; l + 1 < res.state.size(); ++l)
    for (std::size_t k = 0; k < res.state[l].size(); ++k)
      CHECK(res.state[l][k] == doctest::Approx(sig0).epsilon(1e-12));
}

TEST_CASE("fixed-point certificate: an extra step barely moves a settled state") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto cfg = tight_settle(2000, 1e-10);
  auto res = settle(net, x, Complex(0.08, 0.03), y, cfg);
  REQUIRE(res.converged);
  CState next = res.state;
  auto cache = net.make_cache(x);
  net.step(res.state, next, *cache, Complex(0.08, 0.03), y, NoiseContext{}, 0);
  CHECK(residual_norm(res.state, next) < 1e-9);
}

// Settling at conj(beta) from a conjugated start mirrors settling at beta.
TEST_CASE("conjugate symmetry of the dynamics") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto cfg = tight_settle(400, 1e-13);
  const Complex beta(0.07, 0.06);
  auto up = settle(net, x, beta, y, cfg);
  auto down = settle(net, x, std::conj(beta), y, cfg);
  REQUIRE(up.converged);
  REQUIRE(down.converged);
  for (std::size_t l = 0; l < up.state.size(); ++l)
    for (std::size_t k = 0; k < up.state[l].size(); ++k)
      CHECK(std::abs(up.state[l][k] - std::conj(down.state[l][k])) < 1e-10);
}

TEST_CASE("warm start reaches the cold-start fixed point") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto cfg = tight_settle(2000, 1e-12);
  auto path = NudgePath::circle(0.1, 8);
  auto prev = settle(net, x, path.point(0), y, cfg);
  REQUIRE(prev.converged);
  auto warm = settle(net, x, path.point(1), y, cfg, &prev.state);
  auto cold = settle(net, x, path.point(1), y, cfg);
  REQUIRE(warm.converged);
  REQUIRE(cold.converged);
  for (std::size_t l = 0; l < warm.state.size(); ++l)
    for (std::size_t k = 0; k < warm.state[l].size(); ++k)
      CHECK(std::abs(warm.state[l][k] - cold.state[l][k]) < 1e-8);
}

// Every point of the teaching circle used throughout converges within the
// 200-step budget.
TEST_CASE("the |beta| = 0.1 circle is inside the stable region") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  auto path = NudgePath::circle(0.1, 24);
  SettleConfig cfg;
  cfg.max_steps = 200;
  cfg.residual_tol = 1e-8;
  for (std::size_t k = 0; k < path.n_points; ++k) {
    auto res = settle(net, x, path.point(k), y, cfg);
    CHECK(res.converged);
    CHECK(!res.diverged);
  }
}

TEST_CASE("noisy settles never report tolerance convergence in step-count mode") {
  auto net = small_mlp();
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  SettleConfig cfg;
  cfg.max_steps = 80;
  cfg.residual_tol = 0.0;
  cfg.noise_std = 4e-2;
  cfg.rng_seed = 5;
  auto res = settle_real(net, x, 0.0, y, cfg);
  CHECK(!res.converged);
  CHECK(!res.diverged);
  CHECK(res.steps_used == 80);
  // two different seeds give different trajectories
  cfg.rng_seed = 6;
  auto other = settle_real(net, x, 0.0, y, cfg);
  CHECK(res.state[0].data != other.state[0].data);
}

TEST_CASE("divergence is flagged, not propagated") {
  // feed the sigmoid net a state near the activation pole via huge weights
  NetworkSpec spec = small_mlp_spec();
  auto net = LayeredNet::glorot(spec, 3);
  for (auto& v : net.param_tensors()[0].data) v *= 1e12;
  auto x = small_mlp_input();
  auto y = small_mlp_target();
  SettleConfig cfg;
  cfg.max_steps = 50;
  auto res = settle(net, x, Complex(0.4, 0.4), y, cfg);
  // either the state blew past the magnitude threshold or hit a pole
  CHECK(!res.converged);
}
