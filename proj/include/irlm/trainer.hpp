// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-training loop: ennoise -> denoise -> fill back -> regularize ->
// optimize, with per-step metrics, interval checkpoints and bit-identical
// resume. All randomness is derived from (seed, step/epoch, sequence index)
// streams, so resuming from a checkpoint re-derives exactly the draws the
// uninterrupted run would have made:
//   "init"                 model initialization
//   "order", epoch         batch shuffle of that epoch
//   "ennoise", e, i        masking of sequence i (e = epoch, or 0 when
//                          dynamic_masking is off)
//   "dropout", step        dropout draws of the corrupted-input forwards

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "irlm/adam.hpp"
#include "irlm/checkpoint.hpp"
#include "irlm/ennoise.hpp"
#include "irlm/eval.hpp"
#include "irlm/instance_reg.hpp"
#include "irlm/model.hpp"
#include "irlm/ops.hpp"
#include "irlm/rng.hpp"
#include "irlm/tensor.hpp"
#include "irlm/text.hpp"

namespace irlm {

struct TrainConfig {
  std::uint64_t total_steps = 2000;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;  // schedule peak
  double warmup_fraction = 0.1;
  std::uint64_t seed = 42;
  std::uint64_t checkpoint_interval = 500;
  std::uint64_t eval_interval = 0;  // 0 disables in-loop evaluation
  double grad_clip = 1.0;
  double weight_decay = 0.01;
  bool dynamic_masking = true;
  std::string resume_from;
  RegularizerConfig regularizer;
  EnnoiseConfig ennoise;

  void validate() const {
    if (total_steps < 1) {
      throw std::invalid_argument("TrainConfig: total_steps must be >= 1");
    }
    if (batch_size < 1) {
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
      throw std::invalid_argument(
          "TrainConfig: warmup_fraction must be in [0, 1)");
    }
    regularizer.validate();
    ennoise.validate();
  }
};

/// Linear ramp from 0 to the peak over warmup_fraction * total_steps, then
/// linear decay to 0 at total_steps. The train loop evaluates it at 1-based
/// step indices.
inline double lr_at(std::uint64_t step, const TrainConfig& config) {
  if (step > config.total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) +
                                " beyond total_steps " +
                                std::to_string(config.total_steps));
  }
  const double total = static_cast<double>(config.total_steps);
  const double warmup = std::floor(config.warmup_fraction * total);
  const double s = static_cast<double>(step);
  if (warmup > 0.0 && s <= warmup) {
    return config.learning_rate * s / warmup;
  }
  if (total <= warmup) return 0.0;
  return config.learning_rate * (total - s) / (total - warmup);
}

/// Raised when a step produces a non-finite loss; carries the diagnostic
/// breakdown of the offending step.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, LossBreakdown bd)
      : std::runtime_error(what), breakdown(bd) {}
  LossBreakdown breakdown;
};

namespace detail {

/// Argmax over non-special ids only; used for fill-back so the filled
/// sequence never contains MASK (or any structural token).
template <typename T>
std::vector<int> predict_nonspecial(const Tensor<T>& logits) {
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  std::vector<int> out(n);
  const T* pl = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = pl + i * v;
    std::size_t best = Vocab::kNumSpecials;
    for (std::size_t j = Vocab::kNumSpecials + 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> pad_to_width(const std::vector<int>& ids,
                                     std::size_t width) {
  std::vector<int> row(width, Vocab::kPad);
  std::copy(ids.begin(), ids.end(), row.begin());
  return row;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// One optimization step over a batch, per the combined objective:
/// (1) ennoise each sequence, (2) encode the corrupted input, (3) the MLM
/// loss, (4) predict and fill back, (5) encode the original and filled
/// inputs under the gradient policy, (6) combine the three terms,
/// (7) backward + Adam under the warmup/decay schedule. `step` is 1-based;
/// `mask_epoch` keys the ennoise streams.
template <typename T>
LossBreakdown train_step(Model<T>& model, NamedParams<T>& params,
                         const Batch& batch, const TrainConfig& config,
                         const Rng& root, std::uint64_t step,
                         std::uint64_t mask_epoch, AdamState<T>& adam) {
  const auto& reg = config.regularizer;
  const bool want_ecp = reg.weight_ecp > 0.0;
  const bool want_dpp = reg.weight_dpp > 0.0;
  const std::size_t vocab_size = model.config.vocab_size;

  LossBreakdown bd;
  bd.step = step;
  const double lr = lr_at(step, config);
  bd.learning_rate = lr;

  Tape<T> tape;
  Tensor<T> total;
  {
    TapeScope<T> scope(&tape);
    Rng dropout_rng = root.derive("dropout", step);

    std::size_t total_masked = 0;
    std::vector<EnnoisedInstance> instances;
    std::vector<Tensor<T>> ce_losses;
    std::vector<HiddenStates<T>> h_corrupted;
    std::vector<std::vector<int>> filled_rows;
    instances.reserve(batch.size());

    for (std::size_t s = 0; s < batch.size(); ++s) {
      TokenSequence orig;
      orig.ids.assign(batch.ids[s].begin(),
                      batch.ids[s].begin() +
                          static_cast<long>(batch.lengths[s]));
      Rng enn_rng =
          root.derive("ennoise", mask_epoch, batch.seq_indices[s]);
      EnnoisedInstance inst =
          ennoise(orig, config.ennoise, enn_rng, vocab_size);

      HiddenStates<T> hc;
      hc.states = forward_sequence(
          model, detail::pad_to_width(inst.corrupted.ids, batch.width),
          batch.attention[s], /*train_mode=*/true, &dropout_rng);
      hc.provenance = Provenance::kCorrupted;

      Tensor<T> masked_hidden =
          gather_rows(hc.states, inst.masked_positions);
      Tensor<T> logits = mlm_logits(model, masked_hidden);
      std::vector<std::uint8_t> all(inst.labels.size(), 1);
      ce_losses.push_back(cross_entropy(logits, inst.labels, all));
      total_masked += inst.labels.size();

      if (want_dpp) {
        FilledSequence filled =
            fill_back(inst.corrupted, inst.masked_positions,
                      detail::predict_nonspecial(logits));
        filled_rows.push_back(detail::pad_to_width(filled.ids, batch.width));
      }
      h_corrupted.push_back(std::move(hc));
      instances.push_back(std::move(inst));
    }

    // MLM loss over the whole batch: total log-loss / total masked count.
    Tensor<T> l_dae = Tensor<T>::scalar(T(0));
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const T w = static_cast<T>(instances[s].labels.size()) /
                  static_cast<T>(total_masked);
      l_dae = add(l_dae, scale(ce_losses[s], w));
    }

    Tensor<T> l_ecp = Tensor<T>::scalar(T(0));
    Tensor<T> l_dpp = Tensor<T>::scalar(T(0));
    if (want_ecp || want_dpp) {
      const T inv_b = T(1) / static_cast<T>(batch.size());
      for (std::size_t s = 0; s < batch.size(); ++s) {
        std::vector<std::uint8_t> include = batch.attention[s];
        if (reg.positions == RegPositions::kMaskedOnly) {
          include.assign(batch.width, 0);
          for (std::size_t pos : instances[s].masked_positions) {
            include[pos] = 1;
          }
        }

        // Regularization-target forwards run without dropout; detached
        // ones run outside the tape so they stay constant targets.
        auto target_forward = [&](const std::vector<int>& row,
                                  bool detached) -> Tensor<T> {
          if (detached) {
            NoGradScope<T> no_grad;
            return forward_sequence(model, row, batch.attention[s],
                                    /*train_mode=*/false, nullptr);
          }
          return forward_sequence(model, row, batch.attention[s],
                                  /*train_mode=*/false, nullptr);
        };

        HiddenStates<T> ho;
        ho.provenance = Provenance::kOriginal;
        ho.states = target_forward(batch.ids[s], reg.detach_original);

        if (want_ecp) {
          l_ecp = add(l_ecp, scale(ecp(h_corrupted[s], ho, include, reg),
                                   inv_b));
        }
        if (want_dpp) {
          HiddenStates<T> hf;
          hf.provenance = Provenance::kFilled;
          hf.states = target_forward(filled_rows[s], reg.detach_filled);
          l_dpp = add(l_dpp, scale(dpp(hf, ho, include, reg), inv_b));
        }
      }
    }

    bd.l_dae = static_cast<double>(l_dae.item());
    bd.l_ecp = static_cast<double>(l_ecp.item());
    bd.l_dpp = static_cast<double>(l_dpp.item());
    if (!std::isfinite(bd.l_dae) || !std::isfinite(bd.l_ecp) ||
        !std::isfinite(bd.l_dpp)) {
      bd.l_total = bd.l_dae + reg.weight_ecp * bd.l_ecp +
                   reg.weight_dpp * bd.l_dpp;
      throw NonFiniteLossError(
          "train_step: non-finite loss at step " + std::to_string(step) +
              " (l_dae=" + std::to_string(bd.l_dae) +
              ", l_ecp=" + std::to_string(bd.l_ecp) +
              ", l_dpp=" + std::to_string(bd.l_dpp) + ")",
          bd);
    }
    RegularizedLoss<T> combined = regularized_loss(l_dae, l_ecp, l_dpp, reg);
    total = combined.total;
    bd.l_total = combined.breakdown.l_total;
  }

  backward(total);
  clip_global_norm(params, config.grad_clip);
  adam.learning_rate = lr;
  adam_step(params, adam);
  zero_grads(params);
  return bd;
}

struct TrainResult {
  std::vector<LossBreakdown> metrics;  // steps actually run by this call
  std::string final_checkpoint;
  std::string metrics_path;
};

/// Runs total_steps steps over the corpus, appending one metrics row per
/// step to <out_dir>/metrics.csv, checkpointing at intervals and finally,
/// and (optionally) evaluating MLM loss/accuracy on a held-out corpus at
/// eval_interval into <out_dir>/eval.csv. Resumable: set resume_from to a
/// mid-training checkpoint and the remaining steps replay bit-identically.
template <typename T>
TrainResult train(const TrainConfig& config, const ModelConfig& model_config,
                  const std::vector<TokenSequence>& corpus,
                  const std::vector<TokenSequence>& heldout,
                  const std::string& out_dir) {
  config.validate();
  if (corpus.empty()) {
    throw std::invalid_argument("train: empty corpus");
  }
  std::filesystem::create_directories(out_dir);

  const Rng root(config.seed);
  Model<T> model;
  AdamState<T> adam;
  std::uint64_t start_step = 0;
  if (!config.resume_from.empty()) {
    bool has_adam = false;
    model = load_checkpoint<T>(config.resume_from, &adam, &has_adam);
    if (!has_adam) {
      throw std::runtime_error("train: checkpoint '" + config.resume_from +
                               "' carries no optimizer state to resume from");
    }
    start_step = adam.step;
    if (start_step >= config.total_steps) {
      throw std::invalid_argument(
          "train: checkpoint already at step " + std::to_string(start_step) +
          " of " + std::to_string(config.total_steps));
    }
  } else {
    Rng init_rng = root.derive("init");
    model = init_model<T>(model_config, init_rng);
    adam = AdamState<T>::init(model.parameters(), config.learning_rate,
                              config.weight_decay);
  }
  NamedParams<T> params = model.parameters();
  if (!config.resume_from.empty()) {
    // Moment buffers were sized by the checkpoint; sanity-check alignment.
    if (adam.m.size() != params.size()) {
      throw std::runtime_error("train: optimizer state does not match model");
    }
  }

  const std::size_t batches_per_epoch =
      (corpus.size() + config.batch_size - 1) / config.batch_size;

  const std::string metrics_path = out_dir + "/metrics.csv";
  std::ofstream metrics(metrics_path,
                        start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!metrics) {
    throw std::runtime_error("train: cannot open '" + metrics_path + "'");
  }
  if (start_step == 0) {
    metrics << "step,l_dae,l_ecp,l_dpp,l_total,lr,wall_time_s\n";
  }

  const std::string eval_path = out_dir + "/eval.csv";
  std::ofstream eval_csv;
  if (config.eval_interval > 0 && !heldout.empty()) {
    eval_csv.open(eval_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (start_step == 0) eval_csv << "step,mlm_loss,mlm_acc\n";
  }

  TrainResult result;
  result.metrics_path = metrics_path;
  std::vector<Batch> batches;
  std::uint64_t cached_epoch = UINT64_MAX;
  for (std::uint64_t step = start_step + 1; step <= config.total_steps;
       ++step) {
    const std::uint64_t epoch = (step - 1) / batches_per_epoch;
    const std::size_t batch_index =
        static_cast<std::size_t>((step - 1) % batches_per_epoch);
    if (epoch != cached_epoch) {
      Rng order_rng = root.derive("order", epoch);
      batches = make_batches(corpus, config.batch_size, order_rng);
      cached_epoch = epoch;
    }
    const std::uint64_t mask_epoch = config.dynamic_masking ? epoch : 0;

    const auto t0 = std::chrono::steady_clock::now();
    LossBreakdown bd = train_step(model, params, batches[batch_index], config,
                                  root, step, mask_epoch, adam);
    bd.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    metrics << bd.step << "," << detail::format_double(bd.l_dae) << ","
            << detail::format_double(bd.l_ecp) << ","
            << detail::format_double(bd.l_dpp) << ","
            << detail::format_double(bd.l_total) << ","
            << detail::format_double(bd.learning_rate) << ","
            << detail::format_double(bd.wall_time) << "\n";
    metrics.flush();
    result.metrics.push_back(bd);

    if (eval_csv.is_open() && step % config.eval_interval == 0) {
      const auto ev = mlm_eval(model, heldout, config.ennoise,
                               root.derive("eval").seed());
      eval_csv << step << "," << detail::format_double(ev.loss) << ","
               << detail::format_double(ev.accuracy) << "\n";
      eval_csv.flush();
    }

    if (config.checkpoint_interval > 0 &&
        step % config.checkpoint_interval == 0 &&
        step != config.total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%07llu.irlm",
                    static_cast<unsigned long long>(step));
      save_checkpoint(out_dir + "/" + name, model, &adam);
    }
  }

  result.final_checkpoint = out_dir + "/checkpoint_final.irlm";
  save_checkpoint(result.final_checkpoint, model, &adam);
  return result;
}

}  // namespace irlm
