#include <cstdlib>

#include "doctest.h"
#include "holoprop/config.hpp"

using namespace holoprop;

namespace {
const char* kSample = R"(
# comment
[network]
kind = mlp
layers = 6,4,4,4
noise_std = 0.04

[nudge]
radius = 0.1
n_points = 24
)";
}

TEST_CASE("parse, typed getters and defaults") {
  auto cfg = RunConfig::parse_string(kSample);
  CHECK(cfg.get_string("network", "kind", "cnn") == "mlp");
  auto layers = cfg.get_u64s("network", "layers", {});
  REQUIRE(layers.size() == 4);
  CHECK(layers[1] == 4);
  CHECK(cfg.get_double("network", "noise_std", 0.0) == doctest::Approx(0.04));
  CHECK(cfg.get_double("nudge", "radius", 0.4) == doctest::Approx(0.1));
  CHECK(cfg.get_u64("nudge", "n_points", 2) == 24);
  // defaults are recorded in the resolved text
  CHECK(cfg.get_u64("settle", "t_free", 200) == 200);
  auto text = cfg.resolved_text();
  CHECK(text.find("[settle]") != std::string::npos);
  CHECK(text.find("t_free = 200") != std::string::npos);
  CHECK_NOTHROW(cfg.require_all_consumed());
}

TEST_CASE("unknown keys are rejected by name") {
  auto cfg = RunConfig::parse_string("[network]\nkind = mlp\nbogus_key = 3\n");
  cfg.get_string("network", "kind", "mlp");
  CHECK_THROWS_WITH_AS(cfg.require_all_consumed(), doctest::Contains("bogus_key"), ConfigError);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(RunConfig::parse_string("key_outside = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_string("[sec\nk = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_string("[sec]\nnovalue\n"), ConfigError);
  auto cfg = RunConfig::parse_string("[sec]\nk = abc\n");
  CHECK_THROWS_AS(cfg.get_double("sec", "k", 0.0), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_string("[sec]\nk = maybe\n").get_bool("sec", "k", true),
                  ConfigError);
}

TEST_CASE("environment overrides") {
  ::setenv("HOLOPROP_NUDGE_RADIUS", "0.33", 1);
  ::setenv("HOLOPROP_NETWORK_NOISE_STD", "0.5", 1);
  auto cfg = RunConfig::parse_string(kSample);
  cfg.apply_env_overrides();
  CHECK(cfg.get_double("nudge", "radius", 0.0) == doctest::Approx(0.33));
  CHECK(cfg.get_double("network", "noise_std", 0.0) == doctest::Approx(0.5));
  ::unsetenv("HOLOPROP_NUDGE_RADIUS");
  ::unsetenv("HOLOPROP_NETWORK_NOISE_STD");
}

TEST_CASE("lists and booleans") {
  auto cfg = RunConfig::parse_string("[train]\nlearning_rate = 0.25,0.15,0.1\nresume = true\n");
  auto lrs = cfg.get_doubles("train", "learning_rate", {});
  REQUIRE(lrs.size() == 3);
  CHECK(lrs[2] == doctest::Approx(0.1));
  CHECK(cfg.get_bool("train", "resume", false));
}
