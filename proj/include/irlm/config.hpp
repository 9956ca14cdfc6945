// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat key = value file with command-line overrides.
// Every key must be recognized; the fully resolved set is echoed to the
// output directory before any work begins. Precedence: flag > file >
// built-in default.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "irlm/ennoise.hpp"
#include "irlm/eval.hpp"
#include "irlm/instance_reg.hpp"
#include "irlm/model.hpp"
#include "irlm/synthetic.hpp"
#include "irlm/trainer.hpp"

namespace irlm {

/// Configuration or usage problem; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out = "out";
  std::string precision = "double";  // or "single"

  std::string data_corpus;
  std::string data_heldout;
  std::string data_probe;
  std::string data_synonyms;
  std::string data_vocab;
  std::uint64_t data_min_frequency = 1;
  std::uint64_t data_max_vocab = 8192;

  std::uint64_t model_n_layers = 2;
  std::uint64_t model_n_heads = 2;
  std::uint64_t model_d_model = 32;
  std::uint64_t model_d_ff = 64;
  std::uint64_t model_max_len = 128;
  double model_dropout = 0.1;

  std::uint64_t train_total_steps = 2000;
  std::uint64_t train_batch_size = 8;
  double train_learning_rate = 1e-3;
  double train_warmup_fraction = 0.1;
  std::uint64_t train_checkpoint_interval = 500;
  std::uint64_t train_eval_interval = 0;
  double train_grad_clip = 1.0;
  double train_weight_decay = 0.01;
  bool train_dynamic_masking = true;
  std::string train_resume_from;

  double ennoise_mask_ratio = 0.15;
  double ennoise_p_mask = 0.8;
  double ennoise_p_random = 0.1;
  double ennoise_p_keep = 0.1;

  double reg_weight_ecp = 1.0;
  double reg_weight_dpp = 1.0;
  bool reg_detach_original = true;
  bool reg_detach_filled = false;
  double reg_epsilon_kl = 1e-8;
  std::string reg_distance = "kl";  // or "mse"
  bool reg_swap_kl_direction = false;
  std::string reg_positions = "all";  // or "masked"

  std::uint64_t eval_seed = 12345;
  double eval_swap_fraction = 1.0;
  std::uint64_t eval_probe_epochs = 200;
  double eval_probe_lr = 0.05;
  bool eval_probe_finetune = false;
  std::uint64_t eval_probe_finetune_epochs = 3;
  std::string eval_curve_metrics = "l_total";
  std::string ablate_seeds = "1,2,3";

  std::uint64_t gen_words_per_family = 6;
  std::uint64_t gen_fillers = 16;
  std::uint64_t gen_pretrain_sentences = 1500;
  std::uint64_t gen_heldout_sentences = 200;
  std::uint64_t gen_probe_examples = 600;
  std::uint64_t gen_min_len = 8;
  std::uint64_t gen_max_len = 14;

  /// Parses the file (when non-empty) and applies overrides in order.
  /// Unknown keys, unparsable values and invalid settings are all reported
  /// together in one ConfigError.
  static RunConfig load(
      const std::string& config_path,
      const std::vector<std::pair<std::string, std::string>>& overrides);

  /// Writes every key = value, in registry order.
  void echo(const std::string& path) const;

  void validate() const;

  // Typed sub-configs for the pipeline modules.
  ModelConfig model_config(std::size_t vocab_size) const;
  TrainConfig train_config() const;
  EnnoiseConfig ennoise_config() const;
  RegularizerConfig regularizer_config() const;
  ProbeConfig probe_config() const;
  SyntheticSpec synthetic_spec() const;

  std::vector<std::uint64_t> ablation_seed_list() const;
  std::vector<std::string> curve_metric_list() const;
};

}  // namespace irlm
