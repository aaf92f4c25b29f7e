#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "holoprop/io.hpp"
#include "holoprop/oracle.hpp"
#include "holoprop/parallel.hpp"
#include "run_setup.hpp"

namespace fs = std::filesystem;
using namespace holoprop;
using cli::Setup;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 0;
  bool workers_set = false;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file")->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides [run] out)");
  cmd->add_option("--seed", args.seed, "override [run] seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--workers", args.workers, "bound the worker pool (overrides [run] workers)")
      ->each([&](const std::string&) { args.workers_set = true; });
  cmd->add_flag("--dry-run", args.dry_run, "validate and echo the resolved config, compute nothing");
}

Setup make_setup(const CommonArgs& args) {
  auto cfg = RunConfig::parse_file(args.config_path);
  cfg.apply_env_overrides();
  if (args.seed_set) cfg.set("run", "seed", std::to_string(args.seed));
  if (args.workers_set) cfg.set("run", "workers", std::to_string(args.workers));
  if (!args.out_dir.empty()) cfg.set("run", "out", args.out_dir);
  return cli::build_setup(cfg);
}

std::size_t input_dim(const NetworkSpec& spec) {
  return spec.kind == NetworkSpec::Kind::Mlp
             ? spec.layer_sizes.front()
             : spec.in_channels * spec.in_height * spec.in_width;
}

// Validate, create the output directory and persist the resolved config.
// Returns false when the run should stop (dry run).
bool prepare(const Setup& setup, const CommonArgs& args) {
  if (args.dry_run) {
    std::cout << setup.resolved;
    return false;
  }
  fs::create_directories(setup.out_dir);
  std::ofstream f(fs::path(setup.out_dir) / "resolved.cfg");
  f << setup.resolved;
  return true;
}

Dataset batch_data(const Setup& setup) {
  const std::size_t dim = input_dim(setup.network);
  const std::size_t classes = setup.network.output_size();
  if (setup.data_source == "mnist") {
    auto full = load_mnist(setup.mnist_dir);
    if (full.dim() != dim)
      throw ConfigError("mnist images have dimension " + std::to_string(full.dim()) +
                        " but the network expects " + std::to_string(dim));
    return setup.batch ? full.slice(0, std::min(setup.batch, full.size())) : full;
  }
  return synth_dataset(std::max<std::size_t>(setup.batch, 1), dim, classes, setup.synth_seed);
}

std::vector<RealTensor> batch_oracle(const LayeredNet& net, const Dataset& batch,
                                     std::size_t t_free) {
  std::vector<RealTensor> mean;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto g = unrolled_adjoint_gradient(net, batch.sample(i), batch.label_one_hot(i), t_free);
    if (i == 0) {
      mean = std::move(g.grads);
    } else {
      for (std::size_t p = 0; p < mean.size(); ++p)
        for (std::size_t k = 0; k < mean[p].size(); ++k) mean[p][k] += g.grads[p][k];
    }
  }
  for (auto& t : mean)
    for (auto& v : t.data) v /= static_cast<double>(batch.size());
  return mean;
}

int cmd_grad_check(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  auto batch = batch_data(setup);
  auto oracle = batch_oracle(net, batch, setup.oracle_t_free);

  std::vector<GradientEstimate> parts(batch.size());
  parallel_for(batch.size(), setup.workers, [&](std::size_t i) {
    parts[i] = hep_estimate(net, batch.sample(i), batch.label_one_hot(i), setup.path,
                            setup.free_cfg, setup.nudge_cfg, false, i);
  });
  auto est = average_estimates(parts);
  auto rep = cosine_similarity(est.grads, oracle);

  std::vector<std::vector<std::string>> rows;
  auto names = net.param_names();
  for (std::size_t p = 0; p < rep.per_layer.size(); ++p) {
    rows.push_back({names[p], rep.layer_defined[p] ? format_double(rep.per_layer[p]) : "nan"});
    std::cout << names[p] << "  cosine=" << (rep.layer_defined[p]
                                                 ? format_double(rep.per_layer[p])
                                                 : "nan")
              << "\n";
  }
  rows.push_back({"total", format_double(rep.total)});
  write_csv((fs::path(setup.out_dir) / "gradcheck.csv").string(), {"layer", "cosine"}, rows);
  std::cout << "RESULT cmd=grad-check total_cosine=" << format_double(rep.total)
            << " imag_ratio=" << format_double(est.imag_ratio)
            << " n_points=" << setup.path.n_points
            << " radius=" << format_double(setup.path.radius) << "\n";
  return 0;
}

int cmd_stability_map(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  auto batch = batch_data(setup);
  auto map = stability_map(net, batch.sample(0), batch.label_one_hot(0), setup.grid,
                           setup.map_t_steps, setup.workers);
  const auto dir = fs::path(setup.out_dir);
  write_stability_csv(map, (dir / "stability.csv").string());
  write_stability_pgm(map, (dir / "stability.pgm").string(),
                      (dir / "stability_meta.csv").string());
  std::size_t diverged = 0;
  for (auto d : map.diverged) diverged += d;
  std::cout << "RESULT cmd=stability-map resolution=" << setup.grid.resolution
            << " diverged_cells=" << diverged << " t_steps=" << setup.map_t_steps << "\n";
  return 0;
}

int cmd_orbit(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  auto batch = batch_data(setup);
  std::vector<std::size_t> units(setup.orbit_units.begin(), setup.orbit_units.end());
  auto trace = orbit_trace(net, batch.sample(0), batch.label_one_hot(0), setup.path, units,
                           setup.free_cfg, setup.nudge_cfg);
  write_orbit_csv(trace, (fs::path(setup.out_dir) / "orbit.csv").string());
  std::cout << "RESULT cmd=orbit n_points=" << setup.path.n_points
            << " units=" << units.size() << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  auto batch = batch_data(setup);
  std::vector<RealTensor> xs, ys;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    xs.push_back(batch.sample(i));
    ys.push_back(batch.label_one_hot(i));
  }
  SweepRequest req;
  if (setup.sweep_axis == "radius")
    req.axis = SweepAxis::Radii;
  else if (setup.sweep_axis == "n_points")
    req.axis = SweepAxis::NPoints;
  else if (setup.sweep_axis == "t_osc")
    req.axis = SweepAxis::TOsc;
  else
    throw ConfigError("experiment: axis must be radius, n_points or t_osc");
  req.values = setup.sweep_values;
  req.estimators = setup.sweep_estimators;
  req.n_points = setup.path.n_points;
  req.radius = setup.path.radius;
  req.online_periods = setup.online_periods;
  req.classic_realizations = setup.classic_realizations;
  req.noise_std = setup.network.noise_std;
  req.seed = setup.seed;
  req.oracle_t_free = setup.oracle_t_free;
  auto sweep = cosine_sweep(net, xs, ys, req, setup.free_cfg, setup.nudge_cfg, setup.workers);
  write_sweep_csv(sweep, net.param_names(), (fs::path(setup.out_dir) / "sweep.csv").string());
  std::size_t diverged = 0;
  for (const auto& p : sweep.points) diverged += p.diverged;
  std::cout << "RESULT cmd=sweep rows=" << sweep.points.size() << " diverged=" << diverged
            << "\n";
  return 0;
}

int cmd_online_curve(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  auto batch = batch_data(setup);
  auto oracle = batch_oracle(net, batch, setup.oracle_t_free);

  std::vector<std::vector<std::string>> rows;
  double last_cosine = 0.0;
  for (std::uint64_t t_osc : setup.t_osc_values) {
    OnlineConfig ocfg = setup.online;
    ocfg.t_osc = t_osc;
    ocfg.t_plas = t_osc * setup.online_periods;
    ocfg.total_periods = setup.online_periods;
    std::vector<OnlineRun> runs(batch.size());
    parallel_for(batch.size(), setup.workers, [&](std::size_t i) {
      runs[i] = online_curve(net, batch.sample(i), batch.label_one_hot(i), ocfg,
                             setup.nudge_cfg, i);
    });
    for (std::size_t period = 0; period < setup.online_periods; ++period) {
      std::vector<GradientEstimate> parts;
      double residual = 0.0;
      for (const auto& r : runs) {
        parts.push_back(r.per_period[period]);
        residual += r.mean_residual[period];
      }
      auto est = average_estimates(parts);
      auto rep = cosine_similarity(est.grads, oracle);
      last_cosine = rep.total;
      rows.push_back({std::to_string(t_osc), std::to_string(period + 1),
                      format_double(rep.total),
                      format_double(residual / static_cast<double>(runs.size())),
                      std::to_string(setup.seed)});
    }
  }
  write_csv((fs::path(setup.out_dir) / "online_curve.csv").string(),
            {"t_osc", "period", "cosine", "mean_residual", "seed"}, rows);
  std::cout << "RESULT cmd=online-curve rows=" << rows.size()
            << " final_cosine=" << format_double(last_cosine) << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  const std::size_t dim = input_dim(setup.network);
  const std::size_t classes = setup.network.output_size();
  Dataset full = setup.data_source == "mnist"
                     ? load_mnist(setup.mnist_dir)
                     : synth_dataset(std::max<std::size_t>(setup.synth_n, 1), dim, classes,
                                     setup.synth_seed);
  if (full.dim() != dim)
    throw ConfigError("dataset dimension " + std::to_string(full.dim()) +
                      " does not match the network input " + std::to_string(dim));
  if (setup.val_count >= full.size())
    throw ConfigError("val_count must leave training data");
  const std::size_t train_n = full.size() - setup.val_count;
  Dataset val = setup.val_count ? full.slice(train_n, setup.val_count)
                                : Dataset{RealTensor(Shape{0, dim}), {}, classes};
  Dataset train_split = full.slice(0, setup.train_subset ? std::min(setup.train_subset, train_n)
                                                         : train_n);

  auto net = LayeredNet::glorot(setup.network, setup.init_seed);
  TrainConfig tc = setup.train;
  tc.seed = setup.seed;
  tc.workers = setup.workers;
  tc.log_path = (fs::path(setup.out_dir) / "train_log.csv").string();
  tc.checkpoint_path = (fs::path(setup.out_dir) / "model.hckpt").string();
  auto result = train(net, train_split, val, tc);
  const auto& last = result.log.back();
  std::cout << "RESULT cmd=train epochs=" << result.log.size()
            << " final_train_err=" << format_double(last.train_err)
            << " final_val_err=" << format_double(last.val_err)
            << " mean_imag_residual=" << format_double(last.mean_imag_residual) << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  Setup setup = make_setup(args);
  if (!prepare(setup, args)) return 0;
  if (setup.eval_checkpoint.empty()) throw ConfigError("eval: checkpoint path not set");
  auto ckpt = load_checkpoint(setup.eval_checkpoint);
  if (ckpt.spec_text != setup.network.canonical_text())
    throw ConfigError("eval: checkpoint was trained on a different network: " + ckpt.spec_text);
  LayeredNet net(setup.network, ckpt.params);
  Dataset data = batch_data(setup);
  const std::size_t t = setup.train.eval_t_free ? setup.train.eval_t_free : setup.train.t_free;
  const double err = evaluate(net, data, t, setup.train.eval_tol, setup.workers);
  std::cout << "RESULT cmd=eval error=" << format_double(err) << " samples=" << data.size()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"holomorphic equilibrium propagation workbench"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* grad_check = app.add_subcommand("grad-check", "estimator vs oracle cosine report");
  auto* stability = app.add_subcommand("stability-map", "complex-plane convergence map");
  auto* orbit = app.add_subcommand("orbit", "fixed-point orbit of selected units");
  auto* sweep = app.add_subcommand("sweep", "estimator quality sweep");
  auto* online = app.add_subcommand("online-curve", "online estimate vs periods");
  auto* train_cmd = app.add_subcommand("train", "supervised training loop");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  for (auto* cmd : {grad_check, stability, orbit, sweep, online, train_cmd, eval_cmd})
    add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (grad_check->parsed()) return cmd_grad_check(args);
    if (stability->parsed()) return cmd_stability_map(args);
    if (orbit->parsed()) return cmd_orbit(args);
    if (sweep->parsed()) return cmd_sweep(args);
    if (online->parsed()) return cmd_online_curve(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (eval_cmd->parsed()) return cmd_eval(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
