#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holoprop/estimators.hpp"
#include "holoprop/model.hpp"

namespace holoprop {

struct Dataset {
  RealTensor images;  // [n x d], values in [0, 1]
  std::vector<std::size_t> labels;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return images.shape.size() > 1 ? images.shape[1] : 0; }
  RealTensor sample(std::size_t i) const;
  RealTensor label_one_hot(std::size_t i) const { return one_hot(labels[i], classes); }
  Dataset slice(std::size_t start, std::size_t count) const;
};

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);
// Standard filenames first (train-*), then the bundled subset (mnist_subset-*).
Dataset load_mnist(const std::string& dir);
// Gaussian inputs with uniformly drawn labels, reproducible from the seed.
Dataset synth_dataset(std::size_t n, std::size_t input_dim, std::size_t classes,
                      std::uint64_t seed);

struct TrainConfig {
  std::size_t batch_size = 20;
  std::vector<double> learning_rates{5e-2};  // one value, or one per layer
  double momentum = 0.0;
  std::vector<double> weight_decays{0.0};
  std::size_t epochs = 50;
  enum class Schedule { Constant, Cosine } schedule = Schedule::Constant;
  std::vector<double> final_lrs;  // cosine annealing targets

  std::string estimator = "hep";  // hep | classic | online | oracle
  double radius = 0.4;            // hep circle radius / classic beta
  std::size_t n_points = 10;
  std::size_t t_free = 200;
  std::size_t t_nudge = 50;
  std::size_t t_osc = 300;
  std::size_t t_plas = 900;
  double noise_std = 0.0;
  std::uint64_t seed = 1;
  std::size_t start_epoch = 0;  // resume point; streams are counter-based so
                                // resuming reproduces an uninterrupted run

  unsigned workers = 0;
  std::size_t eval_t_free = 0;        // 0: use t_free
  double eval_tol = 1e-6;             // early stop for evaluation settles
  std::size_t train_err_samples = 2000;  // train-error subsample per epoch (0: full)
  std::string checkpoint_path;        // written at the end (and on abort)
  std::string log_path;               // CSV: epoch,train_err,val_err,mean_imag_residual,wall_seconds

  double lr_at(std::size_t epoch, std::size_t layer) const;
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_err = 0.0;
  double val_err = 0.0;
  double mean_imag_residual = 0.0;
  double wall_seconds = 0.0;
  double train_loss = 0.0;  // mean loss over the train-error subsample
};

struct Optimizer {
  std::vector<RealTensor> velocity;
};

// v <- m v + g + wd theta; theta <- theta - lr(epoch) v, per-layer rates.
void sgd_step(std::vector<RealTensor>& params, const std::vector<RealTensor>& grads,
              Optimizer& opt, const TrainConfig& cfg, std::size_t epoch);

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_loss = 0.0;  // mean loss before the first update
};

// Passing an optimizer resumes from its momentum buffers (checkpoint restore);
// all random streams are counter-based on (seed, epoch, sample), so a resumed
// run reproduces an uninterrupted one bit for bit.
TrainResult train(LayeredNet& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, Optimizer* resume_opt = nullptr);

double evaluate(const Model& model, const Dataset& data, std::size_t t_free, double tol,
                unsigned workers = 0);
// error rate and mean loss at the free fixed point
std::pair<double, double> evaluate_with_loss(const Model& model, const Dataset& data,
                                             std::size_t t_free, double tol,
                                             unsigned workers = 0);

struct Checkpoint {
  std::uint32_t version = 1;
  std::string spec_text;
  std::uint64_t spec_hash = 0;
  std::vector<RealTensor> params;
  std::vector<RealTensor> velocity;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;   // rng state: streams are counter-based on (seed, epoch, ...)
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::uint64_t fnv1a(const std::string& text);

}  // namespace holoprop
