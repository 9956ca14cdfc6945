// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// irlm command-line interface.
//
// Commands: gen-data, build-vocab, pretrain, evaluate, ablate, robustness,
// curves. Global flags: --config, --seed, --out, --precision, plus --set
// key=value for any config key. Exit codes: 0 success, 1 usage or
// configuration error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "irlm/checkpoint.hpp"
#include "irlm/config.hpp"
#include "irlm/harness.hpp"
#include "irlm/synthetic.hpp"
#include "irlm/text.hpp"
#include "irlm/trainer.hpp"

namespace {

using irlm::ConfigError;
using irlm::RunConfig;

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct CommonFlags {
  std::string config_path;
  std::string seed;
  std::string out;
  std::string precision;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    cmd->add_option("--seed", seed, "random seed (overrides config)");
    cmd->add_option("--out", out, "output directory (overrides config)");
    cmd->add_option("--precision", precision,
                    "floating-point precision: single or double");
    cmd->add_option("--set", sets,
                    "override any config key, e.g. --set train.total_steps=100");
  }

  Overrides overrides() const {
    Overrides o;
    if (!seed.empty()) o.emplace_back("seed", seed);
    if (!out.empty()) o.emplace_back("out", out);
    if (!precision.empty()) o.emplace_back("precision", precision);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects key=value, got '" + s + "'");
      }
      o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return o;
  }

  RunConfig resolve(const Overrides& extra = {}) const {
    Overrides o = overrides();
    for (const auto& e : extra) o.push_back(e);
    RunConfig cfg = RunConfig::load(config_path, o);
    std::filesystem::create_directories(cfg.out);
    cfg.echo(cfg.out + "/config_resolved.cfg");
    return cfg;
  }
};

std::string require_path(const std::string& value, const std::string& key) {
  if (value.empty()) {
    throw ConfigError("missing required setting '" + key + "'");
  }
  return value;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename F>
void dispatch_precision(const std::string& precision, F&& fn) {
  if (precision == "single") {
    fn(float{});
  } else {
    fn(double{});
  }
}

template <typename F>
void dispatch_checkpoint_dtype(const std::string& path, F&& fn) {
  const auto code = irlm::peek_checkpoint_dtype(path);
  if (code == 1) {
    fn(float{});
  } else {
    fn(double{});
  }
}

int cmd_gen_data(const CommonFlags& flags) {
  RunConfig cfg = flags.resolve();
  const auto data =
      irlm::generate_synthetic_data(cfg.synthetic_spec(), cfg.out + "/data");
  std::cout << "corpus: " << data.corpus_path << "\n"
            << "heldout: " << data.heldout_path << "\n"
            << "probe: " << data.probe_path << "\n"
            << "synonyms: " << data.synonyms_path << "\n";
  return 0;
}

int cmd_build_vocab(const CommonFlags& flags, const std::string& corpus_flag) {
  Overrides extra;
  if (!corpus_flag.empty()) extra.emplace_back("data.corpus", corpus_flag);
  RunConfig cfg = flags.resolve(extra);
  const std::string corpus = require_path(cfg.data_corpus, "data.corpus");
  const std::string vocab_path =
      cfg.data_vocab.empty() ? cfg.out + "/vocab.txt" : cfg.data_vocab;
  const irlm::Vocab vocab =
      irlm::build_vocab(corpus, cfg.data_min_frequency, cfg.data_max_vocab);
  irlm::save_vocab(vocab, vocab_path);
  std::cout << "vocab size: " << vocab.size() << "\n"
            << "written to: " << vocab_path << "\n";
  return 0;
}

int cmd_pretrain(const CommonFlags& flags, bool baseline) {
  Overrides extra;
  if (baseline) {
    extra.emplace_back("reg.weight_ecp", "0");
    extra.emplace_back("reg.weight_dpp", "0");
  }
  RunConfig cfg = flags.resolve(extra);
  const irlm::Vocab vocab =
      irlm::load_vocab(require_path(cfg.data_vocab, "data.vocab"));
  std::size_t dropped = 0;
  const auto corpus =
      irlm::load_corpus(require_path(cfg.data_corpus, "data.corpus"), vocab,
                        cfg.model_max_len, &dropped);
  if (dropped > 0) {
    std::cerr << "note: dropped " << dropped
              << " sequences with no maskable token\n";
  }
  std::vector<irlm::TokenSequence> heldout;
  if (!cfg.data_heldout.empty()) {
    heldout = irlm::load_corpus(cfg.data_heldout, vocab, cfg.model_max_len);
  }
  dispatch_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto result = irlm::train<T>(cfg.train_config(),
                                       cfg.model_config(vocab.size()), corpus,
                                       heldout, cfg.out);
    std::cout << "steps: " << result.metrics.size() << "\n"
              << "metrics: " << result.metrics_path << "\n"
              << "final checkpoint: " << result.final_checkpoint << "\n";
  });
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint) {
  RunConfig cfg = flags.resolve();
  if (checkpoint.empty()) {
    throw ConfigError("evaluate: --checkpoint is required");
  }
  const irlm::Vocab vocab =
      irlm::load_vocab(require_path(cfg.data_vocab, "data.vocab"));
  const auto heldout =
      irlm::load_corpus(require_path(cfg.data_heldout, "data.heldout"), vocab,
                        cfg.model_max_len);
  dispatch_checkpoint_dtype(checkpoint, [&](auto tag) {
    using T = decltype(tag);
    irlm::Model<T> model = irlm::load_checkpoint<T>(checkpoint);
    const auto ev =
        irlm::mlm_eval(model, heldout, cfg.ennoise_config(), cfg.eval_seed);
    bool have_probe = false;
    double probe_acc = 0.0;
    if (!cfg.data_probe.empty()) {
      auto task = irlm::make_probe_task(
          irlm::load_probe_examples(cfg.data_probe), cfg.seed);
      probe_acc =
          irlm::probe_train_eval(model, vocab, task, cfg.probe_config());
      have_probe = true;
    }
    std::ofstream csv(cfg.out + "/evaluate.csv");
    csv << "checkpoint,mlm_loss,mlm_acc,probe_acc\n";
    csv << checkpoint << "," << fmt(ev.loss) << "," << fmt(ev.accuracy) << ","
        << (have_probe ? fmt(probe_acc) : "") << "\n";
    std::cout << "mlm_loss: " << fmt(ev.loss) << "\n"
              << "mlm_acc: " << fmt(ev.accuracy) << "\n";
    if (have_probe) std::cout << "probe_acc: " << fmt(probe_acc) << "\n";
  });
  return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& seeds_flag) {
  Overrides extra;
  if (!seeds_flag.empty()) extra.emplace_back("ablate.seeds", seeds_flag);
  RunConfig cfg = flags.resolve(extra);
  const irlm::Vocab vocab =
      irlm::load_vocab(require_path(cfg.data_vocab, "data.vocab"));
  const auto corpus =
      irlm::load_corpus(require_path(cfg.data_corpus, "data.corpus"), vocab,
                        cfg.model_max_len);
  const auto heldout =
      irlm::load_corpus(require_path(cfg.data_heldout, "data.heldout"), vocab,
                        cfg.model_max_len);
  auto task = irlm::make_probe_task(
      irlm::load_probe_examples(require_path(cfg.data_probe, "data.probe")),
      cfg.seed);
  dispatch_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto rows = irlm::ablation_grid<T>(
        cfg.train_config(), cfg.model_config(vocab.size()), corpus, heldout,
        vocab, task, cfg.probe_config(), cfg.eval_seed,
        cfg.ablation_seed_list(), cfg.out + "/runs");
    irlm::write_ablation_csv(rows, cfg.out + "/ablation.csv");
    std::map<std::string, std::pair<double, int>> means;
    for (const auto& r : rows) {
      means[r.variant].first += r.probe_acc;
      means[r.variant].second += 1;
    }
    std::cout << "rows: " << rows.size() << "\n";
    for (const auto& v : irlm::ablation_variants()) {
      const auto& [sum, count] = means[v.name];
      std::cout << v.name << " mean probe_acc: " << fmt(sum / count) << "\n";
    }
    std::cout << "written to: " << cfg.out << "/ablation.csv\n";
  });
  return 0;
}

int cmd_robustness(const CommonFlags& flags, const std::string& baseline_ckpt,
                   const std::string& ir_ckpt) {
  RunConfig cfg = flags.resolve();
  if (baseline_ckpt.empty() || ir_ckpt.empty()) {
    throw ConfigError(
        "robustness: --baseline-checkpoint and --ir-checkpoint are required");
  }
  const irlm::Vocab vocab =
      irlm::load_vocab(require_path(cfg.data_vocab, "data.vocab"));
  auto task = irlm::make_probe_task(
      irlm::load_probe_examples(require_path(cfg.data_probe, "data.probe")),
      cfg.seed);
  const auto table = irlm::load_synonym_table(
      require_path(cfg.data_synonyms, "data.synonyms"));

  std::ofstream csv(cfg.out + "/robustness.csv");
  csv << "model,n_test,acc_original,acc_transformed,delta,transform,"
         "altered_fraction\n";
  auto run_one = [&](const std::string& name, const std::string& path) {
    dispatch_checkpoint_dtype(path, [&](auto tag) {
      using T = decltype(tag);
      irlm::Model<T> model = irlm::load_checkpoint<T>(path);
      const auto report = irlm::robustness_eval(
          model, vocab, task, table, cfg.probe_config(),
          cfg.eval_swap_fraction, cfg.eval_seed);
      csv << name << "," << report.n_test << "," << fmt(report.metric_original)
          << "," << fmt(report.metric_transformed) << "," << fmt(report.delta)
          << "," << report.transform_name << ","
          << fmt(report.altered_fraction) << "\n";
      std::cout << name << ": original " << fmt(report.metric_original)
                << ", transformed " << fmt(report.metric_transformed)
                << ", delta " << fmt(report.delta) << "\n";
    });
  };
  run_one("baseline", baseline_ckpt);
  run_one("ir", ir_ckpt);
  std::cout << "written to: " << cfg.out << "/robustness.csv\n";
  return 0;
}

int cmd_curves(const CommonFlags& flags, const std::vector<std::string>& runs,
               const std::string& steps_flag, const std::string& metrics_flag) {
  Overrides extra;
  if (!metrics_flag.empty()) {
    extra.emplace_back("eval.curve_metrics", metrics_flag);
  }
  RunConfig cfg = flags.resolve(extra);
  if (runs.empty()) {
    throw ConfigError("curves: at least one --run name=metrics.csv is needed");
  }
  std::vector<std::pair<std::string, std::string>> run_list;
  for (const auto& r : runs) {
    const auto eq = r.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("curves: --run expects name=path, got '" + r + "'");
    }
    run_list.emplace_back(r.substr(0, eq), r.substr(eq + 1));
  }
  std::vector<std::uint64_t> grid;
  if (!steps_flag.empty()) {
    std::stringstream ss(steps_flag);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty()) grid.push_back(std::stoull(cell));
    }
  }
  const auto result = irlm::curve_export(run_list, grid,
                                         cfg.curve_metric_list(),
                                         cfg.out + "/curves.csv");
  std::cout << "rows: " << result.rows << "\n"
            << "written to: " << result.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instance-regularized masked language model pre-training"};
  app.require_subcommand(1);

  CommonFlags gen_flags, vocab_flags, pretrain_flags, eval_flags, ablate_flags,
      robust_flags, curves_flags;

  auto* gen = app.add_subcommand("gen-data",
                                 "emit the synthetic corpus, probe task and "
                                 "synonym table");
  gen_flags.attach(gen);

  auto* vocab = app.add_subcommand("build-vocab",
                                   "build a vocabulary from a corpus");
  vocab_flags.attach(vocab);
  std::string vocab_corpus;
  vocab->add_option("--corpus", vocab_corpus, "corpus path");

  auto* pretrain = app.add_subcommand("pretrain", "run pre-training");
  pretrain_flags.attach(pretrain);
  bool baseline = false;
  pretrain->add_flag("--baseline", baseline,
                     "plain MLM: force both regularizer weights to 0");

  auto* evaluate = app.add_subcommand("evaluate",
                                      "MLM metrics (and probe accuracy) for "
                                      "a checkpoint");
  eval_flags.attach(evaluate);
  std::string eval_checkpoint;
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint path");

  auto* ablate = app.add_subcommand("ablate",
                                    "full IR / -ECP / -DPP / baseline grid");
  ablate_flags.attach(ablate);
  std::string ablate_seeds;
  ablate->add_option("--seeds", ablate_seeds, "comma-separated seed list");

  auto* robustness = app.add_subcommand("robustness",
                                        "synonym-swap robustness comparison");
  robust_flags.attach(robustness);
  std::string baseline_ckpt, ir_ckpt;
  robustness->add_option("--baseline-checkpoint", baseline_ckpt,
                         "baseline model checkpoint");
  robustness->add_option("--ir-checkpoint", ir_ckpt, "IR model checkpoint");

  auto* curves = app.add_subcommand("curves",
                                    "align metrics files for plotting");
  curves_flags.attach(curves);
  std::vector<std::string> curve_runs;
  std::string curve_steps, curve_metrics;
  curves->add_option("--run", curve_runs, "name=metrics.csv (repeatable)");
  curves->add_option("--steps", curve_steps, "comma-separated step grid");
  curves->add_option("--metrics", curve_metrics,
                     "comma-separated metric columns");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (vocab->parsed()) return cmd_build_vocab(vocab_flags, vocab_corpus);
    if (pretrain->parsed()) return cmd_pretrain(pretrain_flags, baseline);
    if (evaluate->parsed()) return cmd_evaluate(eval_flags, eval_checkpoint);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, ablate_seeds);
    if (robustness->parsed()) {
      return cmd_robustness(robust_flags, baseline_ckpt, ir_ckpt);
    }
    if (curves->parsed()) {
      return cmd_curves(curves_flags, curve_runs, curve_steps, curve_metrics);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
