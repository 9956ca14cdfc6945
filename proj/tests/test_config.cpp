// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "irlm/config.hpp"

using irlm::ConfigError;
using irlm::RunConfig;

namespace {

std::string write_cfg(const std::string& name, const std::string& content) {
  const std::string path =
      (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("config files parse with flag precedence") {
  const std::string path = write_cfg("irlm_cfg_ok.cfg",
                                     "# a comment\n"
                                     "seed = 7\n"
                                     "train.total_steps = 50  # inline\n"
                                     "reg.distance = mse\n");
  SUBCASE("file values land in the typed fields") {
    RunConfig cfg = RunConfig::load(path, {});
    CHECK(cfg.seed == 7);
    CHECK(cfg.train_total_steps == 50);
    CHECK(cfg.regularizer_config().distance == irlm::RegDistance::kMse);
  }
  SUBCASE("command-line overrides beat the file") {
    RunConfig cfg = RunConfig::load(path, {{"seed", "9"}});
    CHECK(cfg.seed == 9);
    CHECK(cfg.train_total_steps == 50);
  }
  SUBCASE("defaults fill everything else") {
    RunConfig cfg = RunConfig::load(path, {});
    CHECK(cfg.precision == "double");
    CHECK(cfg.ennoise_mask_ratio == 0.15);
    CHECK(cfg.reg_weight_ecp == 1.0);
  }
}

TEST_CASE("config errors are collected exhaustively") {
  const std::string path = write_cfg("irlm_cfg_bad.cfg",
                                     "unknown.key = 1\n"
                                     "train.total_steps = banana\n"
                                     "model.n_heads = -2\n");
  try {
    RunConfig::load(path, {});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("unknown.key") != std::string::npos);
    CHECK(what.find("banana") != std::string::npos);
    CHECK(what.find("n_heads") != std::string::npos);
  }
  SUBCASE("invalid enum values are configuration errors") {
    CHECK_THROWS_AS(RunConfig::load("", {{"precision", "half"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("", {{"reg.distance", "cosine"}}),
                    ConfigError);
  }
  SUBCASE("missing config file is a configuration error") {
    CHECK_THROWS_AS(RunConfig::load("/nonexistent.cfg", {}), ConfigError);
  }
}

TEST_CASE("the resolved config echo is reloadable and idempotent") {
  RunConfig cfg = RunConfig::load("", {{"seed", "3"},
                                       {"train.learning_rate", "0.003"},
                                       {"reg.weight_dpp", "0"}});
  const std::string echo1 =
      (std::filesystem::temp_directory_path() / "irlm_echo1.cfg").string();
  cfg.echo(echo1);

  RunConfig reloaded = RunConfig::load(echo1, {});
  const std::string echo2 =
      (std::filesystem::temp_directory_path() / "irlm_echo2.cfg").string();
  reloaded.echo(echo2);

  auto read_all = [](const std::string& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(read_all(echo1) == read_all(echo2));
  CHECK(reloaded.seed == 3);
  CHECK(reloaded.reg_weight_dpp == 0.0);
}

TEST_CASE("ablation seed and metric lists parse") {
  RunConfig cfg = RunConfig::load("", {{"ablate.seeds", "4, 5,6"}});
  CHECK(cfg.ablation_seed_list() == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(cfg.curve_metric_list() == std::vector<std::string>{"l_total"});
  RunConfig cfg2 = RunConfig::load("", {{"eval.curve_metrics", "l_dae,lr"}});
  CHECK(cfg2.curve_metric_list() == std::vector<std::string>{"l_dae", "lr"});
}
