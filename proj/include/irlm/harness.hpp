// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Protocol runners built on the trainer and evaluator: the four-variant
// ablation grid and the training-curve exporter.

#pragma once

#include <string>
#include <vector>

#include "irlm/eval.hpp"
#include "irlm/trainer.hpp"

namespace irlm {

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double mlm_loss = 0.0;
  double mlm_acc = 0.0;
  double probe_acc = 0.0;
};

struct AblationVariant {
  std::string name;
  double weight_ecp;
  double weight_dpp;
};

/// Table-3-style grid: full IR, -ECP, -DPP, baseline.
inline std::vector<AblationVariant> ablation_variants() {
  return {{"full_ir", 1.0, 1.0},
          {"no_ecp", 0.0, 1.0},
          {"no_dpp", 1.0, 0.0},
          {"baseline", 0.0, 0.0}};
}

/// Trains and evaluates every variant under every seed with otherwise
/// identical configs. Run artifacts land under <out_dir>/<variant>_seed<s>/.
template <typename T>
std::vector<AblationRow> ablation_grid(
    const TrainConfig& base_train, const ModelConfig& base_model,
    const std::vector<TokenSequence>& corpus,
    const std::vector<TokenSequence>& heldout, const Vocab& vocab,
    const ProbeTask& task, const ProbeConfig& probe_config,
    std::uint64_t eval_seed, const std::vector<std::uint64_t>& seeds,
    const std::string& out_dir) {
  if (seeds.empty()) {
    throw std::invalid_argument("ablation_grid: no seeds");
  }
  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variants()) {
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = base_train;
      tc.seed = seed;
      tc.regularizer.weight_ecp = variant.weight_ecp;
      tc.regularizer.weight_dpp = variant.weight_dpp;
      ModelConfig mc = base_model;
      mc.seed = seed;
      const std::string run_dir =
          out_dir + "/" + variant.name + "_seed" + std::to_string(seed);
      TrainResult tr = train<T>(tc, mc, corpus, heldout, run_dir);

      Model<T> model = load_checkpoint<T>(tr.final_checkpoint);
      const MlmEvalResult ev =
          mlm_eval(model, heldout, tc.ennoise, eval_seed);
      ProbeConfig pc = probe_config;
      pc.seed = seed;
      AblationRow row;
      row.variant = variant.name;
      row.seed = seed;
      row.mlm_loss = ev.loss;
      row.mlm_acc = ev.accuracy;
      row.probe_acc = probe_train_eval(model, vocab, task, pc);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// variant,seed,mlm_loss,mlm_acc,probe_acc
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path);

struct CurveExportResult {
  std::size_t rows = 0;
  bool empty_intersection = false;
  std::string warning;
  std::string out_path;
};

/// Aligns per-step metrics files into a long-format CSV
/// (run,step,metric,value). Steps are the intersection of the runs' step
/// columns with step_grid (empty grid = all common steps); a mismatch
/// between the runs' grids produces a warning, not an error. Values are
/// copied verbatim from the source files.
CurveExportResult curve_export(
    const std::vector<std::pair<std::string, std::string>>& runs,
    const std::vector<std::uint64_t>& step_grid,
    const std::vector<std::string>& metrics, const std::string& out_path);

}  // namespace irlm
