// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace irlm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& v) {
  if (v.empty() || v[0] == '-') {
    throw std::invalid_argument("expected a non-negative integer");
  }
  std::size_t pos = 0;
  const std::uint64_t out = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return out;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false");
}

#define STR_FIELD(key, member)                                       \
  Field {                                                            \
    key, [](RunConfig& c, const std::string& v) { c.member = v; },   \
        [](const RunConfig& c) { return c.member; }                  \
  }
#define U64_FIELD(key, member)                                              \
  Field {                                                                   \
    key,                                                                    \
        [](RunConfig& c, const std::string& v) { c.member = parse_u64(v); },\
        [](const RunConfig& c) { return std::to_string(c.member); }         \
  }
#define DBL_FIELD(key, member)                                       \
  Field {                                                            \
    key,                                                             \
        [](RunConfig& c, const std::string& v) {                     \
          c.member = parse_double(v);                                \
        },                                                           \
        [](const RunConfig& c) { return fmt_double(c.member); }      \
  }
#define BOOL_FIELD(key, member)                                      \
  Field {                                                            \
    key,                                                             \
        [](RunConfig& c, const std::string& v) {                     \
          c.member = parse_bool(v);                                  \
        },                                                           \
        [](const RunConfig& c) {                                     \
          return std::string(c.member ? "true" : "false");           \
        }                                                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      U64_FIELD("seed", seed),
      STR_FIELD("out", out),
      STR_FIELD("precision", precision),
      STR_FIELD("data.corpus", data_corpus),
      STR_FIELD("data.heldout", data_heldout),
      STR_FIELD("data.probe", data_probe),
      STR_FIELD("data.synonyms", data_synonyms),
      STR_FIELD("data.vocab", data_vocab),
      U64_FIELD("data.min_frequency", data_min_frequency),
      U64_FIELD("data.max_vocab", data_max_vocab),
      U64_FIELD("model.n_layers", model_n_layers),
      U64_FIELD("model.n_heads", model_n_heads),
      U64_FIELD("model.d_model", model_d_model),
      U64_FIELD("model.d_ff", model_d_ff),
      U64_FIELD("model.max_len", model_max_len),
      DBL_FIELD("model.dropout", model_dropout),
      U64_FIELD("train.total_steps", train_total_steps),
      U64_FIELD("train.batch_size", train_batch_size),
      DBL_FIELD("train.learning_rate", train_learning_rate),
      DBL_FIELD("train.warmup_fraction", train_warmup_fraction),
      U64_FIELD("train.checkpoint_interval", train_checkpoint_interval),
      U64_FIELD("train.eval_interval", train_eval_interval),
      DBL_FIELD("train.grad_clip", train_grad_clip),
      DBL_FIELD("train.weight_decay", train_weight_decay),
      BOOL_FIELD("train.dynamic_masking", train_dynamic_masking),
      STR_FIELD("train.resume_from", train_resume_from),
      DBL_FIELD("ennoise.mask_ratio", ennoise_mask_ratio),
      DBL_FIELD("ennoise.p_mask", ennoise_p_mask),
      DBL_FIELD("ennoise.p_random", ennoise_p_random),
      DBL_FIELD("ennoise.p_keep", ennoise_p_keep),
      DBL_FIELD("reg.weight_ecp", reg_weight_ecp),
      DBL_FIELD("reg.weight_dpp", reg_weight_dpp),
      BOOL_FIELD("reg.detach_original", reg_detach_original),
      BOOL_FIELD("reg.detach_filled", reg_detach_filled),
      DBL_FIELD("reg.epsilon_kl", reg_epsilon_kl),
      STR_FIELD("reg.distance", reg_distance),
      BOOL_FIELD("reg.swap_kl_direction", reg_swap_kl_direction),
      STR_FIELD("reg.positions", reg_positions),
      U64_FIELD("eval.seed", eval_seed),
      DBL_FIELD("eval.swap_fraction", eval_swap_fraction),
      U64_FIELD("eval.probe_epochs", eval_probe_epochs),
      DBL_FIELD("eval.probe_lr", eval_probe_lr),
      BOOL_FIELD("eval.probe_finetune", eval_probe_finetune),
      U64_FIELD("eval.probe_finetune_epochs", eval_probe_finetune_epochs),
      STR_FIELD("eval.curve_metrics", eval_curve_metrics),
      STR_FIELD("ablate.seeds", ablate_seeds),
      U64_FIELD("gen.words_per_family", gen_words_per_family),
      U64_FIELD("gen.fillers", gen_fillers),
      U64_FIELD("gen.pretrain_sentences", gen_pretrain_sentences),
      U64_FIELD("gen.heldout_sentences", gen_heldout_sentences),
      U64_FIELD("gen.probe_examples", gen_probe_examples),
      U64_FIELD("gen.min_len", gen_min_len),
      U64_FIELD("gen.max_len", gen_max_len),
  };
  return kFields;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::load(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  std::vector<std::string> errors;

  auto apply = [&](const std::string& key, const std::string& value,
                   const std::string& where) {
    const Field* f = find_field(key);
    if (!f) {
      errors.push_back(where + ": unknown key '" + key + "'");
      return;
    }
    try {
      f->set(cfg, value);
    } catch (const std::exception& e) {
      errors.push_back(where + ": bad value '" + value + "' for '" + key +
                       "' (" + e.what() + ")");
    }
  };

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      throw ConfigError("cannot open config file '" + config_path + "'");
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        errors.push_back(config_path + ":" + std::to_string(lineno) +
                         ": expected key = value");
        continue;
      }
      apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
            config_path + ":" + std::to_string(lineno));
    }
  }
  for (const auto& [key, value] : overrides) {
    apply(key, value, "command line");
  }

  if (errors.empty()) {
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string all = "configuration errors:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
  return cfg;
}

void RunConfig::echo(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("config echo: cannot open '" + path + "'");
  }
  for (const auto& f : fields()) {
    out << f.key << " = " << f.get(*this) << "\n";
  }
}

void RunConfig::validate() const {
  if (precision != "double" && precision != "single") {
    throw ConfigError("precision must be 'double' or 'single', got '" +
                      precision + "'");
  }
  if (reg_distance != "kl" && reg_distance != "mse") {
    throw ConfigError("reg.distance must be 'kl' or 'mse', got '" +
                      reg_distance + "'");
  }
  if (reg_positions != "all" && reg_positions != "masked") {
    throw ConfigError("reg.positions must be 'all' or 'masked', got '" +
                      reg_positions + "'");
  }
  train_config().validate();  // also validates ennoise + regularizer
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.n_layers = model_n_layers;
  m.n_heads = model_n_heads;
  m.d_model = model_d_model;
  m.d_ff = model_d_ff;
  m.vocab_size = vocab_size;
  m.max_len = model_max_len;
  m.dropout_rate = model_dropout;
  m.seed = seed;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.total_steps = train_total_steps;
  t.batch_size = train_batch_size;
  t.learning_rate = train_learning_rate;
  t.warmup_fraction = train_warmup_fraction;
  t.seed = seed;
  t.checkpoint_interval = train_checkpoint_interval;
  t.eval_interval = train_eval_interval;
  t.grad_clip = train_grad_clip;
  t.weight_decay = train_weight_decay;
  t.dynamic_masking = train_dynamic_masking;
  t.resume_from = train_resume_from;
  t.regularizer = regularizer_config();
  t.ennoise = ennoise_config();
  return t;
}

EnnoiseConfig RunConfig::ennoise_config() const {
  EnnoiseConfig e;
  e.mask_ratio = ennoise_mask_ratio;
  e.p_mask = ennoise_p_mask;
  e.p_random = ennoise_p_random;
  e.p_keep = ennoise_p_keep;
  e.seed = seed;
  return e;
}

RegularizerConfig RunConfig::regularizer_config() const {
  RegularizerConfig r;
  r.weight_ecp = reg_weight_ecp;
  r.weight_dpp = reg_weight_dpp;
  r.detach_original = reg_detach_original;
  r.detach_filled = reg_detach_filled;
  r.epsilon_kl = reg_epsilon_kl;
  r.distance = reg_distance == "mse" ? RegDistance::kMse : RegDistance::kKl;
  r.swap_kl_direction = reg_swap_kl_direction;
  r.positions = reg_positions == "masked" ? RegPositions::kMaskedOnly
                                          : RegPositions::kAllReal;
  return r;
}

ProbeConfig RunConfig::probe_config() const {
  ProbeConfig p;
  p.epochs = eval_probe_epochs;
  p.learning_rate = eval_probe_lr;
  p.finetune = eval_probe_finetune;
  p.finetune_epochs = eval_probe_finetune_epochs;
  p.seed = seed;
  return p;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.words_per_family = gen_words_per_family;
  s.fillers = gen_fillers;
  s.pretrain_sentences = gen_pretrain_sentences;
  s.heldout_sentences = gen_heldout_sentences;
  s.probe_examples = gen_probe_examples;
  s.min_len = gen_min_len;
  s.max_len = gen_max_len;
  s.seed = seed;
  return s;
}

std::vector<std::uint64_t> RunConfig::ablation_seed_list() const {
  std::vector<std::uint64_t> out;
  std::stringstream ss(ablate_seeds);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    out.push_back(parse_u64(cell));
  }
  if (out.empty()) {
    throw ConfigError("ablate.seeds is empty");
  }
  return out;
}

std::vector<std::string> RunConfig::curve_metric_list() const {
  std::vector<std::string> out;
  std::stringstream ss(eval_curve_metrics);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(cell);
  }
  if (out.empty()) {
    throw ConfigError("eval.curve_metrics is empty");
  }
  return out;
}

}  // namespace irlm
