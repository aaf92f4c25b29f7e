#pragma once

#include "holoprop/dynamics.hpp"
#include "holoprop/model.hpp"
#include "holoprop/rng.hpp"

namespace holoprop::testing {

// Small MLP (6-4-4-4, shifted sigmoid) fed one Gaussian sample with a random
// one-hot target; the workhorse fixture shared with the acceptance suite.
inline NetworkSpec small_mlp_spec() {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {6, 4, 4, 4};
  spec.activation = Activation::ShiftedSigmoid;
  return spec;
}

constexpr std::uint64_t kSmallMlpSeed = 12;

inline LayeredNet small_mlp() { return LayeredNet::glorot(small_mlp_spec(), kSmallMlpSeed); }

inline RealTensor small_mlp_input() {
  RealTensor x(Shape{6});
  for (std::size_t i = 0; i < 6; ++i) x[i] = rng::gaussian(kSmallMlpSeed, {0xDA7Au, i});
  return x;
}

inline RealTensor small_mlp_target() { return one_hot(2, 4); }

inline SettleConfig tight_settle(std::size_t max_steps = 600, double tol = 1e-12) {
  SettleConfig cfg;
  cfg.max_steps = max_steps;
  cfg.residual_tol = tol;
  return cfg;
}

// Small CNN: two conv layers with softmax pooling, one hidden fc, softmax
// readout, dSiLU activation.
inline NetworkSpec small_cnn_spec() {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Cnn;
  spec.in_channels = 2;
  spec.in_height = 8;
  spec.in_width = 8;
  spec.conv_layers = {
      {/*channels=*/4, /*kernel=*/3, /*stride=*/1, /*padding=*/1, /*pool_window=*/2,
       /*pool_stride=*/2},
      {/*channels=*/6, /*kernel=*/3, /*stride=*/1, /*padding=*/1, /*pool_window=*/2,
       /*pool_stride=*/2},
  };
  spec.fc_sizes = {16, 4};
  spec.activation = Activation::DSiLU;
  spec.tau = 1.0;
  return spec;
}

constexpr std::uint64_t kSmallCnnSeed = 5;

inline LayeredNet small_cnn() { return LayeredNet::glorot(small_cnn_spec(), kSmallCnnSeed); }

inline RealTensor small_cnn_input() {
  RealTensor x(Shape{2 * 8 * 8});
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 0.5 + 0.25 * rng::gaussian(kSmallCnnSeed, {0xC44u, i});
  return x;
}

}  // namespace holoprop::testing
