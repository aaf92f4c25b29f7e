#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "holoprop/io.hpp"
#include "holoprop/trainer.hpp"
#include "support.hpp"

using namespace holoprop;
using namespace holoprop::testing;

#ifndef HOLOPROP_SOURCE_DIR
#define HOLOPROP_SOURCE_DIR "."
#endif

namespace {
std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("synthetic dataset is reproducible") {
  auto a = synth_dataset(3, 6, 4, 77);
  auto b = synth_dataset(3, 6, 4, 77);
  auto c = synth_dataset(3, 6, 4, 78);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.images.data != c.images.data);
  CHECK(a.size() == 3);
  CHECK(a.dim() == 6);
  for (auto l : a.labels) CHECK(l < 4);
}

TEST_CASE("idx round trip and error reporting") {
  const auto img = tmp_path("holoprop_test-images-idx3-ubyte");
  const auto lab = tmp_path("holoprop_test-labels-idx1-ubyte");
  std::vector<std::uint8_t> pixels(2 * 3 * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = std::uint8_t(i * 13);
  write_idx(img, kIdxImagesMagic, {2, 3, 3}, pixels);
  write_idx(lab, kIdxLabelsMagic, {2}, {1, 7});
  auto ds = load_idx_pair(img, lab);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 9);
  CHECK(ds.labels[1] == 7);
  CHECK(ds.images[1] == doctest::Approx(13.0 / 255.0));

  SUBCASE("bad magic names the offset") {
    write_idx(img, 0x00000999, {2, 3, 3}, pixels);
    CHECK_THROWS_WITH_AS(load_idx_pair(img, lab), doctest::Contains("offset 0"), IoError);
  }
  SUBCASE("truncated payload names the offset") {
    std::vector<std::uint8_t> short_pixels(5);
    write_idx(img, kIdxImagesMagic, {2, 3, 3}, short_pixels);
    CHECK_THROWS_WITH_AS(load_idx_pair(img, lab), doctest::Contains("truncated"), IoError);
  }
  SUBCASE("count mismatch is rejected") {
    write_idx(lab, kIdxLabelsMagic, {3}, {1, 7, 2});
    CHECK_THROWS_WITH_AS(load_idx_pair(img, lab), doctest::Contains("mismatch"), IoError);
  }
}

TEST_CASE("bundled mnist subset loads") {
  auto ds = load_mnist(std::string(HOLOPROP_SOURCE_DIR) + "/data/mnist");
  CHECK(ds.size() == 10000);
  CHECK(ds.dim() == 784);
  CHECK(ds.classes == 10);
  double mx = 0;
  for (double v : ds.images.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mx = std::max(mx, v);
  }
  CHECK(mx == 1.0);
}

TEST_CASE("sgd step") {
  TrainConfig cfg;
  cfg.learning_rates = {0.1};
  cfg.momentum = 0.0;
  cfg.weight_decays = {0.0};
  cfg.epochs = 10;
  std::vector<RealTensor> params = {RealTensor(Shape{2})};
  params[0][0] = 1.0;
  params[0][1] = -2.0;
  std::vector<RealTensor> grads = {RealTensor(Shape{2})};
  Optimizer opt;

  SUBCASE("zero gradient leaves parameters untouched") {
    auto before = params[0].data;
    sgd_step(params, grads, opt, cfg, 0);
    CHECK(params[0].data == before);
  }
  SUBCASE("single step moves against the gradient") {
    grads[0][0] = 0.5;
    sgd_step(params, grads, opt, cfg, 0);
    CHECK(params[0][0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
  }
  SUBCASE("momentum accumulates") {
    cfg.momentum = 0.9;
    grads[0][0] = 1.0;
    sgd_step(params, grads, opt, cfg, 0);
    sgd_step(params, grads, opt, cfg, 0);
    // velocity after two steps: 1, then 1.9
    CHECK(params[0][0] == doctest::Approx(1.0 - 0.1 * (1.0 + 1.9)).epsilon(1e-12));
  }
}

TEST_CASE("cosine annealing endpoints") {
  TrainConfig cfg;
  cfg.learning_rates = {5e-2};
  cfg.final_lrs = {5e-9};
  cfg.schedule = TrainConfig::Schedule::Cosine;
  cfg.epochs = 50;
  CHECK(cfg.lr_at(0, 0) == doctest::Approx(5e-2).epsilon(1e-12));
  CHECK(std::abs(cfg.lr_at(49, 0) - 5e-9) < 1e-9);
  // constant schedule ignores the final rate
  cfg.schedule = TrainConfig::Schedule::Constant;
  CHECK(cfg.lr_at(49, 0) == 5e-2);
}

TEST_CASE("evaluate on rigged readouts") {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {4, 6, 10};
  auto net = LayeredNet::glorot(spec, 4);
  // zero weights, huge class-0 output bias: everything lands on class 0
  for (auto& t : net.param_tensors())
    for (auto& v : t.data) v = 0.0;
  net.param_tensors().back()[0] = 50.0;

  Dataset balanced;
  balanced.classes = 10;
  const std::size_t n = 40;
  balanced.images = RealTensor(Shape{n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    balanced.labels.push_back(i % 10);
    for (std::size_t j = 0; j < 4; ++j) balanced.images.at(i, j) = 0.1 * double(j);
  }
  CHECK(evaluate(net, balanced, 30, 1e-8, 2) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("untrained network sits at chance level on mnist digits") {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {784, 64, 10};
  auto net = LayeredNet::glorot(spec, 11);
  auto ds = load_mnist(std::string(HOLOPROP_SOURCE_DIR) + "/data/mnist").slice(0, 500);
  const double err = evaluate(net, ds, 60, 1e-7, 2);
  CHECK(err > 0.82);
  CHECK(err < 0.97);
}

namespace {
TrainConfig small_train_cfg() {
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.learning_rates = {5e-2};
  cfg.epochs = 1;
  cfg.estimator = "hep";
  cfg.radius = 0.4;
  cfg.n_points = 4;
  cfg.t_free = 60;
  cfg.t_nudge = 20;
  cfg.seed = 3;
  cfg.workers = 2;
  cfg.eval_tol = 1e-9;
  cfg.train_err_samples = 0;
  return cfg;
}
}  // namespace

TEST_CASE("one epoch decreases the mean training loss") {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {12, 16, 4};
  auto net = LayeredNet::glorot(spec, 8);
  auto data = synth_dataset(80, 12, 4, 21);
  auto cfg = small_train_cfg();
  auto result = train(net, data, Dataset{RealTensor(Shape{0, 12}), {}, 4}, cfg);
  REQUIRE(result.log.size() == 1);
  CHECK(result.log[0].train_loss < result.initial_loss);
}

TEST_CASE("training is estimator-agnostic at convergence scale") {
  // swapping the estimator for the oracle cannot change the story: both
  // descend, and the resulting parameters stay close after one epoch
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {12, 16, 4};
  auto hep_net = LayeredNet::glorot(spec, 8);
  auto oracle_net = LayeredNet::glorot(spec, 8);
  auto data = synth_dataset(60, 12, 4, 22);
  auto cfg = small_train_cfg();
  cfg.radius = 0.2;
  cfg.n_points = 6;
  auto hep_log = train(hep_net, data, Dataset{RealTensor(Shape{0, 12}), {}, 4}, cfg);
  cfg.estimator = "oracle";
  cfg.t_free = 150;
  auto oracle_log = train(oracle_net, data, Dataset{RealTensor(Shape{0, 12}), {}, 4}, cfg);
  CHECK(hep_log.log[0].train_loss < hep_log.initial_loss);
  CHECK(oracle_log.log[0].train_loss < oracle_log.initial_loss);
  double num = 0, den = 0;
  for (std::size_t p = 0; p < hep_net.param_tensors().size(); ++p)
    for (std::size_t i = 0; i < hep_net.param_tensors()[p].size(); ++i) {
      num += std::pow(hep_net.param_tensors()[p][i] - oracle_net.param_tensors()[p][i], 2);
      den += std::pow(oracle_net.param_tensors()[p][i], 2);
    }
  CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("checkpoint round trip resumes bit-identically") {
  NetworkSpec spec;
  spec.kind = NetworkSpec::Kind::Mlp;
  spec.layer_sizes = {12, 16, 4};
  auto data = synth_dataset(40, 12, 4, 31);
  Dataset no_val{RealTensor(Shape{0, 12}), {}, 4};

  auto cfg = small_train_cfg();
  cfg.noise_std = 2e-2;  // exercise the seeded noise path across the resume
  cfg.epochs = 2;

  auto straight = LayeredNet::glorot(spec, 8);
  train(straight, data, no_val, cfg);

  auto resumed = LayeredNet::glorot(spec, 8);
  Optimizer opt;
  auto cfg1 = cfg;
  cfg1.epochs = 1;
  train(resumed, data, no_val, cfg1, &opt);

  const auto ckpt_path = tmp_path("holoprop_test.hckpt");
  Checkpoint ckpt;
  ckpt.spec_text = resumed.spec().canonical_text();
  ckpt.spec_hash = fnv1a(ckpt.spec_text);
  ckpt.params = resumed.param_tensors();
  ckpt.velocity = opt.velocity;
  ckpt.epoch = 1;
  ckpt.seed = cfg.seed;
  save_checkpoint(ckpt_path, ckpt);

  auto loaded = load_checkpoint(ckpt_path);
  CHECK(loaded.spec_text == ckpt.spec_text);
  LayeredNet continued(spec, loaded.params);
  Optimizer opt2;
  opt2.velocity = loaded.velocity;
  auto cfg2 = cfg;
  cfg2.start_epoch = loaded.epoch;
  train(continued, data, no_val, cfg2, &opt2);

  for (std::size_t p = 0; p < straight.param_tensors().size(); ++p)
    CHECK(straight.param_tensors()[p].data == continued.param_tensors()[p].data);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const auto path = tmp_path("holoprop_bad.hckpt");
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
