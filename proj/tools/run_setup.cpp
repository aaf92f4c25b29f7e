#include "run_setup.hpp"

#include <stdexcept>

namespace holoprop::cli {

namespace {

NetworkSpec network_from(RunConfig& cfg) {
  NetworkSpec spec;
  const std::string kind = cfg.get_string("network", "kind", "mlp");
  spec.activation = activation_from_name(
      cfg.get_string("network", "activation", kind == "cnn" ? "dsilu" : "shifted_sigmoid"));
  spec.tau = cfg.get_double("network", "tau", 1.0);
  spec.noise_std = cfg.get_double("network", "noise_std", 0.0);
  const auto layers = cfg.get_u64s("network", "layers", {6, 4, 4, 4});
  const auto in_c = cfg.get_u64("network", "input_channels", 1);
  const auto in_h = cfg.get_u64("network", "input_height", 8);
  const auto in_w = cfg.get_u64("network", "input_width", 8);
  const auto conv_channels = cfg.get_u64s("network", "conv_channels", {4, 8});
  const auto conv_kernels = cfg.get_u64s("network", "conv_kernels", {3, 3});
  const auto conv_strides = cfg.get_u64s("network", "conv_strides", {1, 1});
  const auto conv_paddings = cfg.get_u64s("network", "conv_paddings", {1, 1});
  const auto pool_windows = cfg.get_u64s("network", "pool_windows", {2, 2});
  const auto pool_strides = cfg.get_u64s("network", "pool_strides", {2, 2});
  const auto fc_sizes = cfg.get_u64s("network", "fc_sizes", {16, 10});
  if (kind == "mlp") {
    spec.kind = NetworkSpec::Kind::Mlp;
    spec.layer_sizes.assign(layers.begin(), layers.end());
  } else if (kind == "cnn") {
    spec.kind = NetworkSpec::Kind::Cnn;
    spec.in_channels = in_c;
    spec.in_height = in_h;
    spec.in_width = in_w;
    const std::size_t nconv = conv_channels.size();
    auto at = [&](const std::vector<std::uint64_t>& v, std::size_t i, const char* what) {
      if (v.size() == 1) return v[0];
      if (i < v.size()) return v[i];
      throw ConfigError(std::string("network: ") + what + " list shorter than conv_channels");
    };
    for (std::size_t i = 0; i < nconv; ++i) {
      ConvLayerSpec cl;
      cl.channels = conv_channels[i];
      cl.kernel = at(conv_kernels, i, "conv_kernels");
      cl.stride = at(conv_strides, i, "conv_strides");
      cl.padding = at(conv_paddings, i, "conv_paddings");
      cl.pool_window = at(pool_windows, i, "pool_windows");
      cl.pool_stride = at(pool_strides, i, "pool_strides");
      spec.conv_layers.push_back(cl);
    }
    spec.fc_sizes.assign(fc_sizes.begin(), fc_sizes.end());
  } else {
    throw ConfigError("network: kind must be mlp or cnn, got " + kind);
  }
  spec.validate();
  return spec;
}

}  // namespace

Setup build_setup(RunConfig& cfg) {
  Setup s;
  s.seed = cfg.get_u64("run", "seed", 1);
  s.workers = static_cast<unsigned>(cfg.get_u64("run", "workers", 0));
  s.out_dir = cfg.get_string("run", "out", "out");

  s.network = network_from(cfg);
  s.init_seed = cfg.get_u64("network", "init_seed", 1);

  s.free_cfg.max_steps = cfg.get_u64("settle", "t_free", 200);
  s.free_cfg.residual_tol = cfg.get_double("settle", "residual_tol", 0.0);
  s.free_cfg.divergence_threshold = cfg.get_double("settle", "divergence_threshold", 1e6);
  s.free_cfg.warm_start = cfg.get_bool("settle", "warm_start", true);
  s.free_cfg.noise_std = s.network.noise_std;
  s.nudge_cfg = s.free_cfg;
  s.nudge_cfg.max_steps = cfg.get_u64("settle", "t_nudge", 50);

  const double radius = cfg.get_double("nudge", "radius", 0.1);
  const auto n_points = cfg.get_u64("nudge", "n_points", 24);
  s.path = NudgePath::circle(radius, n_points);

  s.online.t_osc = cfg.get_u64("online", "t_osc", 300);
  s.online.t_plas = cfg.get_u64("online", "t_plas", 900);
  s.online.radius = cfg.get_double("online", "radius", radius);
  s.online.equilibrate_steps = cfg.get_u64("online", "equilibrate_steps", 0);

  s.data_source = cfg.get_string("data", "source", "synth");
  s.mnist_dir = cfg.get_string("data", "mnist_dir", "data/mnist");
  s.synth_n = cfg.get_u64("data", "synth_n", 1);
  s.synth_seed = cfg.get_u64("data", "synth_seed", 7);
  s.batch = cfg.get_u64("data", "batch", 1);

  s.train.batch_size = cfg.get_u64("train", "batch_size", 20);
  s.train.learning_rates = cfg.get_doubles("train", "learning_rate", {5e-2});
  s.train.final_lrs = cfg.get_doubles("train", "final_lr", {});
  s.train.momentum = cfg.get_double("train", "momentum", 0.0);
  s.train.weight_decays = cfg.get_doubles("train", "weight_decay", {0.0});
  s.train.epochs = cfg.get_u64("train", "epochs", 50);
  const std::string sched = cfg.get_string("train", "schedule", "constant");
  if (sched == "constant")
    s.train.schedule = TrainConfig::Schedule::Constant;
  else if (sched == "cosine")
    s.train.schedule = TrainConfig::Schedule::Cosine;
  else
    throw ConfigError("train: schedule must be constant or cosine");
  s.train.estimator = cfg.get_string("train", "estimator", "hep");
  s.train.radius = radius;
  s.train.n_points = n_points;
  s.train.t_free = s.free_cfg.max_steps;
  s.train.t_nudge = s.nudge_cfg.max_steps;
  s.train.t_osc = s.online.t_osc;
  s.train.t_plas = s.online.t_plas;
  s.train.noise_std = s.network.noise_std;
  s.train.eval_tol = cfg.get_double("train", "eval_tol", 1e-6);
  s.train.eval_t_free = cfg.get_u64("train", "eval_t_free", 0);
  s.train.train_err_samples = cfg.get_u64("train", "train_err_samples", 2000);
  s.val_count = cfg.get_u64("train", "val_count", 2000);
  s.train_subset = cfg.get_u64("train", "train_subset", 0);

  s.grid.re_min = cfg.get_double("experiment", "grid_re_min", -0.6);
  s.grid.re_max = cfg.get_double("experiment", "grid_re_max", 0.6);
  s.grid.im_min = cfg.get_double("experiment", "grid_im_min", -0.6);
  s.grid.im_max = cfg.get_double("experiment", "grid_im_max", 0.6);
  s.grid.resolution = cfg.get_u64("experiment", "grid_resolution", 201);
  s.map_t_steps = cfg.get_u64("experiment", "t_steps", 200);
  s.sweep_values = cfg.get_doubles("experiment", "values", {0.01, 0.05, 0.1, 0.2, 0.3});
  s.sweep_estimators = cfg.get_strings("experiment", "estimators", {"hep", "classic"});
  s.sweep_axis = cfg.get_string("experiment", "axis", "radius");
  s.online_periods = cfg.get_u64("experiment", "online_periods", 10);
  s.classic_realizations = cfg.get_u64("experiment", "classic_realizations", 1);
  s.oracle_t_free = cfg.get_u64("experiment", "oracle_t_free", 1000);
  s.orbit_units = cfg.get_u64s("experiment", "orbit_units", {0, 1, 2});
  s.t_osc_values = cfg.get_u64s("experiment", "t_osc_values", {40, 100, 200, 400});

  s.eval_checkpoint = cfg.get_string("eval", "checkpoint", "");

  cfg.require_all_consumed();
  s.resolved = cfg.resolved_text();
  return s;
}

Dataset load_dataset(const Setup& setup, std::size_t input_dim, std::size_t classes) {
  if (setup.data_source == "mnist") return load_mnist(setup.mnist_dir);
  if (setup.data_source == "synth")
    return synth_dataset(setup.synth_n, input_dim, classes, setup.synth_seed);
  throw ConfigError("data: source must be mnist or synth, got " + setup.data_source);
}

}  // namespace holoprop::cli
