#pragma once

#include <string>

#include "holoprop/config.hpp"
#include "holoprop/dynamics.hpp"
#include "holoprop/experiments.hpp"
#include "holoprop/model.hpp"
#include "holoprop/trainer.hpp"

namespace holoprop::cli {

// Everything a subcommand might need, built from one config document. All
// sections are always consumed so that unknown keys are rejected and the
// resolved config (defaults included) can be echoed next to the outputs.
struct Setup {
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string out_dir = "out";

  NetworkSpec network;
  std::uint64_t init_seed = 1;
  SettleConfig free_cfg;
  SettleConfig nudge_cfg;
  NudgePath path{0.1, 24};
  OnlineConfig online;

  std::string data_source = "synth";  // synth | mnist
  std::string mnist_dir = "data/mnist";
  std::size_t synth_n = 1;
  std::uint64_t synth_seed = 7;
  std::size_t batch = 1;  // samples used by grad-check / sweep / online-curve

  TrainConfig train;
  std::size_t val_count = 2000;
  std::size_t train_subset = 0;

  GridSpec grid;
  std::size_t map_t_steps = 200;
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_estimators;
  std::string sweep_axis = "radius";
  std::size_t online_periods = 10;
  std::size_t classic_realizations = 1;
  std::size_t oracle_t_free = 1000;
  std::vector<std::uint64_t> orbit_units;
  std::vector<std::uint64_t> t_osc_values;

  std::string eval_checkpoint;

  std::string resolved;  // canonical text of the fully-resolved document
};

Setup build_setup(RunConfig& cfg);

Dataset load_dataset(const Setup& setup, std::size_t input_dim, std::size_t classes);

}  // namespace holoprop::cli
