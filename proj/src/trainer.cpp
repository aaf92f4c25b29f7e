#include "holoprop/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "holoprop/io.hpp"
#include "holoprop/oracle.hpp"
#include "holoprop/parallel.hpp"
#include "holoprop/rng.hpp"

namespace holoprop {

RealTensor Dataset::sample(std::size_t i) const {
  const std::size_t d = dim();
  RealTensor x(Shape{d});
  std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, x.data.begin());
  return x;
}

Dataset Dataset::slice(std::size_t start, std::size_t count) const {
  if (start + count > size()) throw std::invalid_argument("Dataset::slice out of range");
  Dataset out;
  out.classes = classes;
  const std::size_t d = dim();
  out.images = RealTensor(Shape{count, d});
  std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(start * d), count * d,
              out.images.data.begin());
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                    labels.begin() + static_cast<std::ptrdiff_t>(start + count));
  return out;
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  IdxData img = read_idx(images_path, kIdxImagesMagic);
  IdxData lab = read_idx(labels_path, kIdxLabelsMagic);
  if (img.dims.size() != 3)
    throw IoError(images_path + ": expected 3 dimensions, got " +
                  std::to_string(img.dims.size()));
  if (lab.dims.size() != 1) throw IoError(labels_path + ": expected 1 dimension");
  if (img.dims[0] != lab.dims[0])
    throw IoError("image/label count mismatch: " + std::to_string(img.dims[0]) + " vs " +
                  std::to_string(lab.dims[0]));
  Dataset ds;
  const std::size_t n = img.dims[0], d = img.dims[1] * img.dims[2];
  ds.images = RealTensor(Shape{n, d});
  for (std::size_t i = 0; i < n * d; ++i) ds.images[i] = img.payload[i] / 255.0;
  ds.labels.reserve(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(lab.payload[i]);
    max_label = std::max<std::size_t>(max_label, lab.payload[i]);
  }
  ds.classes = std::max<std::size_t>(10, max_label + 1);
  return ds;
}

Dataset load_mnist(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::vector<std::pair<std::string, std::string>> candidates = {
      {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
      {"train-images.idx3-ubyte", "train-labels.idx1-ubyte"},
      {"mnist_subset-images-idx3-ubyte", "mnist_subset-labels-idx1-ubyte"},
  };
  for (const auto& [im, la] : candidates) {
    const fs::path ip = fs::path(dir) / im, lp = fs::path(dir) / la;
    if (fs::exists(ip) && fs::exists(lp)) return load_idx_pair(ip.string(), lp.string());
  }
  throw IoError("no MNIST IDX files found under " + dir);
}

Dataset synth_dataset(std::size_t n, std::size_t input_dim, std::size_t classes,
                      std::uint64_t seed) {
  if (n < 1 || input_dim < 1 || classes < 1)
    throw std::invalid_argument("synth_dataset: bad arguments");
  Dataset ds;
  ds.classes = classes;
  ds.images = RealTensor(Shape{n, input_dim});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < input_dim; ++j)
      ds.images.at(i, j) = rng::gaussian(seed, {0x5A11u, i, j});
  for (std::size_t i = 0; i < n; ++i) {
    auto l = static_cast<std::size_t>(rng::uniform(seed, {0x5A22u, i}) *
                                      static_cast<double>(classes));
    ds.labels.push_back(std::min(l, classes - 1));
  }
  return ds;
}

double TrainConfig::lr_at(std::size_t epoch, std::size_t layer) const {
  const double initial =
      learning_rates.size() == 1 ? learning_rates[0] : learning_rates.at(layer);
  if (schedule == Schedule::Constant || epochs <= 1) return initial;
  double fin = 0.0;
  if (!final_lrs.empty()) fin = final_lrs.size() == 1 ? final_lrs[0] : final_lrs.at(layer);
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return fin + 0.5 * (initial - fin) * (1.0 + std::cos(M_PI * t));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  for (double lr : learning_rates)
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (estimator != "hep" && estimator != "classic" && estimator != "online" &&
      estimator != "oracle")
    throw std::invalid_argument("TrainConfig: unknown estimator " + estimator);
}

void sgd_step(std::vector<RealTensor>& params, const std::vector<RealTensor>& grads,
              Optimizer& opt, const TrainConfig& cfg, std::size_t epoch) {
  if (opt.velocity.empty()) {
    for (const auto& p : params) opt.velocity.emplace_back(p.shape);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t layer = p / 2;  // W and b of a layer share the rate
    const double lr = cfg.lr_at(epoch, layer);
    const double wd =
        cfg.weight_decays.size() == 1 ? cfg.weight_decays[0] : cfg.weight_decays.at(layer);
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      opt.velocity[p][i] =
          cfg.momentum * opt.velocity[p][i] + grads[p][i] + wd * params[p][i];
      params[p][i] -= lr * opt.velocity[p][i];
    }
  }
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(rng::uniform(seed, {0xE90CULL, epoch, i}) *
                                      static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

GradientEstimate sample_estimate(const LayeredNet& model, const RealTensor& x,
                                 const RealTensor& y, const TrainConfig& cfg,
                                 std::uint64_t sample_id) {
  SettleConfig free_cfg;
  free_cfg.max_steps = cfg.t_free;
  free_cfg.residual_tol = 0.0;
  free_cfg.noise_std = cfg.noise_std;
  free_cfg.rng_seed = cfg.seed;
  SettleConfig nudge_cfg = free_cfg;
  nudge_cfg.max_steps = cfg.t_nudge;

  if (cfg.estimator == "classic") {
    SettleConfig classic_nudge = nudge_cfg;
    classic_nudge.max_steps = cfg.t_nudge;
    return classic_ep(model, x, y, cfg.radius, free_cfg, classic_nudge, sample_id);
  }
  if (cfg.estimator == "online") {
    OnlineConfig ocfg;
    ocfg.t_osc = cfg.t_osc;
    ocfg.t_plas = cfg.t_plas;
    ocfg.radius = cfg.radius;
    return online_estimate(model, x, y, ocfg, nudge_cfg, sample_id);
  }
  if (cfg.estimator == "oracle") {
    auto g = unrolled_adjoint_gradient(model, x, y, cfg.t_free);
    GradientEstimate est;
    est.estimator_kind = "oracle";
    est.grads = std::move(g.grads);
    return est;
  }
  // hep: real free settle, then the complex circle warm-started from it
  auto free = settle_real(model, x, 0.0, y, free_cfg, nullptr, sample_id, 0);
  if (free.diverged) throw DivergenceError("training free phase diverged", -1);
  CState warm = to_complex_state(free.state);
  auto trace = nudged_phase_trace(model, x, y, NudgePath::circle(cfg.radius, cfg.n_points),
                                  free_cfg, nudge_cfg, false, sample_id, &warm, free.converged);
  return hep_from_trace(trace);
}

}  // namespace

double evaluate(const Model& model, const Dataset& data, std::size_t t_free, double tol,
                unsigned workers) {
  return evaluate_with_loss(model, data, t_free, tol, workers).first;
}

std::pair<double, double> evaluate_with_loss(const Model& model, const Dataset& data,
                                             std::size_t t_free, double tol, unsigned workers) {
  if (data.size() == 0) return {0.0, 0.0};
  SettleConfig cfg;
  cfg.max_steps = t_free;
  cfg.residual_tol = tol;
  std::vector<char> wrong(data.size(), 0);
  std::vector<double> losses(data.size(), 0.0);
  parallel_for(data.size(), workers, [&](std::size_t i) {
    const RealTensor x = data.sample(i);
    const RealTensor y = data.label_one_hot(i);
    auto res = settle_real(model, x, 0.0, y, cfg, nullptr, i, 0);
    const RealTensor& out = res.state.back();
    std::size_t arg = 0;
    for (std::size_t k = 1; k < out.size(); ++k)
      if (out[k] > out[arg]) arg = k;
    wrong[i] = arg != data.labels[i];
    try {
      losses[i] = model.loss(res.state, y);
    } catch (const std::domain_error&) {
      losses[i] = -std::log(1e-12);  // readout pinned against the log guard
    }
  });
  double err = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    err += wrong[i];
    loss += losses[i];
  }
  return {err / static_cast<double>(data.size()), loss / static_cast<double>(data.size())};
}

TrainResult train(LayeredNet& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, Optimizer* resume_opt) {
  cfg.validate();
  TrainResult result;
  Optimizer local_opt;
  Optimizer& opt = resume_opt ? *resume_opt : local_opt;
  const std::size_t n = train_set.size();
  const std::size_t eval_t = cfg.eval_t_free ? cfg.eval_t_free : cfg.t_free;
  const std::size_t err_n =
      cfg.train_err_samples ? std::min(cfg.train_err_samples, n) : n;
  const Dataset err_subset = train_set.slice(0, err_n);

  result.initial_loss =
      evaluate_with_loss(model, err_subset, eval_t, cfg.eval_tol, cfg.workers).second;

  std::vector<std::vector<std::string>> log_rows;
  for (std::size_t epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto perm = epoch_permutation(n, cfg.seed, epoch);
    double imag_sum = 0.0;
    std::size_t imag_count = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      std::vector<GradientEstimate> parts(bs);
      try {
        parallel_for(bs, cfg.workers, [&](std::size_t b) {
          const std::size_t idx = perm[start + b];
          // stream id folds the epoch in so every step of training draws
          // fresh noise, independent of worker count
          const std::uint64_t sid = idx + (epoch << 32);
          parts[b] = sample_estimate(model, train_set.sample(idx),
                                     train_set.label_one_hot(idx), cfg, sid);
        });
      } catch (const DivergenceError& e) {
        if (!cfg.checkpoint_path.empty()) {
          Checkpoint ckpt;
          ckpt.spec_text = model.spec().canonical_text();
          ckpt.spec_hash = fnv1a(ckpt.spec_text);
          ckpt.params = model.param_tensors();
          ckpt.velocity = opt.velocity;
          ckpt.epoch = epoch;
          ckpt.seed = cfg.seed;
          save_checkpoint(cfg.checkpoint_path + ".abort", ckpt);
        }
        throw DivergenceError(std::string("training aborted at epoch ") +
                                  std::to_string(epoch) + ": " + e.what(),
                              e.phase_index);
      }
      auto mean = average_estimates(parts);
      imag_sum += mean.imag_residual;
      ++imag_count;
      sgd_step(model.param_tensors(), mean.grads, opt, cfg, epoch);
    }
    auto [train_err, train_loss] =
        evaluate_with_loss(model, err_subset, eval_t, cfg.eval_tol, cfg.workers);
    double val_err = 0.0;
    if (val_set.size() > 0)
      val_err = evaluate(model, val_set, eval_t, cfg.eval_tol, cfg.workers);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochLog el;
    el.epoch = epoch;
    el.train_err = train_err;
    el.val_err = val_err;
    el.mean_imag_residual = imag_count ? imag_sum / static_cast<double>(imag_count) : 0.0;
    el.wall_seconds = wall;
    el.train_loss = train_loss;
    result.log.push_back(el);
    log_rows.push_back({std::to_string(epoch), format_double(train_err), format_double(val_err),
                        format_double(el.mean_imag_residual), format_double(wall)});
    if (!cfg.log_path.empty())
      write_csv(cfg.log_path, {"epoch", "train_err", "val_err", "mean_imag_residual",
                               "wall_seconds"},
                log_rows);
  }
  if (!cfg.checkpoint_path.empty()) {
    Checkpoint ckpt;
    ckpt.spec_text = model.spec().canonical_text();
    ckpt.spec_hash = fnv1a(ckpt.spec_text);
    ckpt.params = model.param_tensors();
    ckpt.velocity = opt.velocity;
    ckpt.epoch = cfg.epochs;
    ckpt.seed = cfg.seed;
    save_checkpoint(cfg.checkpoint_path, ckpt);
  }
  return result;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

constexpr char kCkptMagic[8] = {'H', 'P', 'C', 'K', 'P', 'T', '0', '\n'};

void write_u32(std::ostream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void write_tensors(std::ostream& f, const std::vector<RealTensor>& ts) {
  write_u32(f, static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    write_u32(f, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) write_u64(f, d);
    static_assert(sizeof(double) == 8);
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(8 * t.size()));
  }
}

std::vector<RealTensor> read_tensors(std::istream& f) {
  const std::uint32_t count = read_u32(f);
  std::vector<RealTensor> ts;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rank = read_u32(f);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(read_u64(f));
    RealTensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(8 * t.size()));
    ts.push_back(std::move(t));
  }
  return ts;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  write_u32(f, ckpt.version);
  write_u64(f, ckpt.spec_text.size());
  f.write(ckpt.spec_text.data(), static_cast<std::streamsize>(ckpt.spec_text.size()));
  write_u64(f, ckpt.spec_hash);
  write_tensors(f, ckpt.params);
  write_tensors(f, ckpt.velocity);
  write_u64(f, ckpt.epoch);
  write_u64(f, ckpt.seed);
  if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[sizeof(kCkptMagic)];
  f.read(magic, sizeof(magic));
  if (!f || !std::equal(magic, magic + sizeof(magic), kCkptMagic))
    throw IoError(path + ": not a checkpoint (bad magic at offset 0)");
  Checkpoint ckpt;
  ckpt.version = read_u32(f);
  if (ckpt.version != 1)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(ckpt.version));
  const std::uint64_t len = read_u64(f);
  ckpt.spec_text.resize(len);
  f.read(ckpt.spec_text.data(), static_cast<std::streamsize>(len));
  ckpt.spec_hash = read_u64(f);
  if (ckpt.spec_hash != fnv1a(ckpt.spec_text))
    throw IoError(path + ": spec hash mismatch, file corrupted");
  ckpt.params = read_tensors(f);
  ckpt.velocity = read_tensors(f);
  ckpt.epoch = read_u64(f);
  ckpt.seed = read_u64(f);
  if (!f) throw IoError(path + ": truncated checkpoint");
  return ckpt;
}

}  // namespace holoprop
