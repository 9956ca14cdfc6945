// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracle: a plain-MLM trainer written as a straight-line loop
// with no regularizer machinery. Mirrors the production stream derivation
// exactly, so a zero-weight regularized run must reproduce its losses bit
// for bit.

#pragma once

#include <vector>

#include "irlm/trainer.hpp"

namespace oracles {

inline std::vector<double> reference_mlm_losses(
    const irlm::TrainConfig& cfg, const irlm::ModelConfig& mcfg,
    const std::vector<irlm::TokenSequence>& corpus) {
  using irlm::Batch;
  using irlm::EnnoisedInstance;
  using irlm::Rng;
  using irlm::Tensor;
  using irlm::TokenSequence;

  const Rng root(cfg.seed);
  Rng init_rng = root.derive("init");
  irlm::Model<double> model = irlm::init_model<double>(mcfg, init_rng);
  auto params = model.parameters();
  auto adam = irlm::AdamState<double>::init(params, cfg.learning_rate,
                                            cfg.weight_decay);
  const std::size_t bpe =
      (corpus.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<Batch> batches;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<double> losses;
  for (std::uint64_t step = 1; step <= cfg.total_steps; ++step) {
    const std::uint64_t epoch = (step - 1) / bpe;
    if (epoch != cached_epoch) {
      Rng order_rng = root.derive("order", epoch);
      batches = irlm::make_batches(corpus, cfg.batch_size, order_rng);
      cached_epoch = epoch;
    }
    const Batch& batch = batches[(step - 1) % bpe];
    irlm::Tape<double> tape;
    Tensor<double> loss;
    {
      irlm::TapeScope<double> scope(&tape);
      Rng dropout_rng = root.derive("dropout", step);
      std::vector<Tensor<double>> ces;
      std::vector<std::size_t> ms;
      std::size_t total_m = 0;
      for (std::size_t s = 0; s < batch.size(); ++s) {
        TokenSequence orig;
        orig.ids.assign(batch.ids[s].begin(),
                        batch.ids[s].begin() +
                            static_cast<long>(batch.lengths[s]));
        Rng enn = root.derive("ennoise", epoch, batch.seq_indices[s]);
        EnnoisedInstance inst =
            irlm::ennoise(orig, cfg.ennoise, enn, mcfg.vocab_size);
        std::vector<int> row(batch.width, irlm::Vocab::kPad);
        std::copy(inst.corrupted.ids.begin(), inst.corrupted.ids.end(),
                  row.begin());
        Tensor<double> h = irlm::forward_sequence(
            model, row, batch.attention[s], true, &dropout_rng);
        Tensor<double> logits = irlm::mlm_logits(
            model, irlm::gather_rows(h, inst.masked_positions));
        std::vector<std::uint8_t> sel(inst.labels.size(), 1);
        ces.push_back(irlm::cross_entropy(logits, inst.labels, sel));
        ms.push_back(inst.labels.size());
        total_m += inst.labels.size();
      }
      loss = Tensor<double>::scalar(0.0);
      for (std::size_t s = 0; s < ces.size(); ++s) {
        loss = irlm::add(
            loss, irlm::scale(ces[s], double(ms[s]) / double(total_m)));
      }
      irlm::backward(loss);
    }
    irlm::clip_global_norm(params, cfg.grad_clip);
    adam.learning_rate = irlm::lr_at(step, cfg);
    irlm::adam_step(params, adam);
    irlm::zero_grads(params);
    losses.push_back(loss.item());
  }
  return losses;
}

}  // namespace oracles
