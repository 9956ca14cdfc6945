// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Downstream evaluation: deterministic MLM validation metrics, a linear
// probe on the CLS hidden state (frozen encoder or full fine-tune), the
// synonym-swap transform and the robustness comparison built on it.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "irlm/adam.hpp"
#include "irlm/ennoise.hpp"
#include "irlm/instance_reg.hpp"
#include "irlm/model.hpp"
#include "irlm/ops.hpp"
#include "irlm/rng.hpp"
#include "irlm/text.hpp"

namespace irlm {

// ---------------------------------------------------------------------------
// MLM validation
// ---------------------------------------------------------------------------

struct MlmEvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t masked_positions = 0;
};

namespace detail {

/// Order-independent stream key for a sequence's evaluation masking.
inline std::uint64_t sequence_key(const TokenSequence& seq) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (int id : seq.ids) {
    h = mix64(h ^ static_cast<std::uint64_t>(id));
  }
  return h;
}

}  // namespace detail

/// Mean MLM loss and top-1 accuracy over masked positions of a held-out
/// corpus. Masking streams derive from eval_seed and the sequence content
/// (not its position), so the same seed always evaluates the same corrupted
/// instances and the metrics are invariant to test-set ordering.
template <typename T>
MlmEvalResult mlm_eval(const Model<T>& model,
                       const std::vector<TokenSequence>& heldout,
                       const EnnoiseConfig& ennoise_config,
                       std::uint64_t eval_seed) {
  if (heldout.empty()) {
    throw std::invalid_argument("mlm_eval: empty held-out corpus");
  }
  NoGradScope<T> no_grad;
  const Rng root(eval_seed);
  double total_loss = 0.0;
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    Rng rng = root.derive("ennoise", detail::sequence_key(heldout[i]));
    EnnoisedInstance inst =
        ennoise(heldout[i], ennoise_config, rng, model.config.vocab_size);
    std::vector<std::uint8_t> attention(inst.corrupted.ids.size(), 1);
    Tensor<T> h = forward_sequence(model, inst.corrupted.ids, attention,
                                   /*train_mode=*/false, nullptr);
    Tensor<T> logits =
        mlm_logits(model, gather_rows(h, inst.masked_positions));
    const T* pl = logits.data();
    const std::size_t v = logits.shape()[1];
    for (std::size_t k = 0; k < inst.labels.size(); ++k) {
      const T* row = pl + k * v;
      T mx = row[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      T sum = 0;
      for (std::size_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
      const std::size_t target = static_cast<std::size_t>(inst.labels[k]);
      total_loss += static_cast<double>(mx + std::log(sum) - row[target]);
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j) {
        if (row[j] > row[best]) best = j;
      }
      correct += best == target ? 1 : 0;
      ++total;
    }
  }
  MlmEvalResult r;
  r.masked_positions = total;
  r.loss = total_loss / static_cast<double>(total);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

// ---------------------------------------------------------------------------
// Probe task
// ---------------------------------------------------------------------------

struct ProbeExample {
  int label = 0;
  std::string text;
};

struct ProbeTask {
  std::vector<ProbeExample> examples;
  std::size_t n_classes = 0;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

/// Reads a "label<TAB>text" TSV.
std::vector<ProbeExample> load_probe_examples(const std::string& path);

/// Stratified seeded split; every class lands in every split or the call
/// throws. Fractions are val/test shares, the rest trains.
ProbeTask make_probe_task(std::vector<ProbeExample> examples,
                          std::uint64_t seed, double val_fraction = 0.15,
                          double test_fraction = 0.15);

struct ProbeConfig {
  std::size_t epochs = 200;       // frozen-probe epochs (full batch)
  double learning_rate = 0.05;
  bool finetune = false;          // also update the encoder
  std::size_t finetune_epochs = 3;
  std::size_t finetune_batch = 8;
  double finetune_lr = 1e-3;
  std::uint64_t seed = 0;
};

template <typename T>
struct ProbeClassifier {
  Tensor<T> weight;  // [d_model, n_classes]
  Tensor<T> bias;    // [n_classes]
};

namespace detail {

/// CLS-position hidden state per example, eval mode, gradient-free.
template <typename T>
Tensor<T> cls_features(const Model<T>& model, const Vocab& vocab,
                       const std::vector<ProbeExample>& examples,
                       const std::vector<std::size_t>& indices) {
  NoGradScope<T> no_grad;
  const std::size_t d = model.config.d_model;
  Tensor<T> out({indices.size(), d});
  T* po = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const TokenSequence seq =
        encode(examples[indices[i]].text, vocab, model.config.max_len);
    std::vector<std::uint8_t> attention(seq.ids.size(), 1);
    Tensor<T> h = forward_sequence(model, seq.ids, attention,
                                   /*train_mode=*/false, nullptr);
    std::copy(h.data(), h.data() + d, po + i * d);  // CLS is row 0
  }
  return out;
}

template <typename T>
std::vector<int> classify(const ProbeClassifier<T>& clf,
                          const Tensor<T>& features) {
  Tensor<T> logits = add_rows(matmul(features, clf.weight), clf.bias);
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  std::vector<int> out(n);
  const T* pl = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = pl + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline double label_accuracy(const std::vector<int>& predicted,
                             const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    correct += predicted[i] == labels[i] ? 1 : 0;
  }
  return predicted.empty()
             ? 0.0
             : static_cast<double>(correct) /
                   static_cast<double>(predicted.size());
}

inline std::vector<int> labels_at(const std::vector<ProbeExample>& examples,
                                  const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(examples[i].label);
  return out;
}

}  // namespace detail

/// Trains a single linear classifier on the CLS hidden state (zero-init,
/// full-batch Adam) and returns it together with the best-validation-epoch
/// snapshot already applied. With config.finetune the encoder itself is
/// updated too (the passed model is mutated).
template <typename T>
ProbeClassifier<T> train_probe(Model<T>& model, const Vocab& vocab,
                               const ProbeTask& task,
                               const ProbeConfig& config);

/// Test accuracy of a trained probe on the given examples.
template <typename T>
double eval_probe(const Model<T>& model, const ProbeClassifier<T>& clf,
                  const Vocab& vocab, const std::vector<ProbeExample>& examples,
                  const std::vector<std::size_t>& indices) {
  Tensor<T> feats = detail::cls_features(model, vocab, examples, indices);
  return detail::label_accuracy(detail::classify(clf, feats),
                                detail::labels_at(examples, indices));
}

/// Probe accuracy on the task's test split at the best validation epoch.
template <typename T>
double probe_train_eval(Model<T>& model, const Vocab& vocab,
                        const ProbeTask& task, const ProbeConfig& config) {
  ProbeClassifier<T> clf = train_probe(model, vocab, task, config);
  return eval_probe(model, clf, vocab, task.examples, task.test_idx);
}

// ---------------------------------------------------------------------------
// Synonym-swap robustness
// ---------------------------------------------------------------------------

/// word -> admissible replacements. No word maps to itself; every entry is
/// a single whitespace token.
struct SynonymTable {
  std::unordered_map<std::string, std::vector<std::string>> entries;

  void validate() const;
  bool empty() const { return entries.empty(); }
};

/// "word<TAB>syn1,syn2,..." per line.
SynonymTable load_synonym_table(const std::string& path);
void save_synonym_table(const SynonymTable& table, const std::string& path);

/// Replaces each table-listed word with a uniformly chosen synonym with
/// probability swap_fraction. Labels are unchanged; untouched examples are
/// preserved verbatim.
std::vector<ProbeExample> synonym_swap(const std::vector<ProbeExample>& dataset,
                                       const SynonymTable& table, Rng& rng,
                                       double swap_fraction);

struct RobustnessReport {
  double metric_original = 0.0;
  double metric_transformed = 0.0;
  double delta = 0.0;  // transformed - original
  std::string transform_name;
  double altered_fraction = 0.0;
  std::size_t n_test = 0;
};

/// Trains a probe on the original train split, then evaluates the same
/// classifier on the original and synonym-swapped test sets.
template <typename T>
RobustnessReport robustness_eval(Model<T>& model, const Vocab& vocab,
                                 const ProbeTask& task,
                                 const SynonymTable& table,
                                 const ProbeConfig& probe_config,
                                 double swap_fraction,
                                 std::uint64_t transform_seed) {
  ProbeClassifier<T> clf = train_probe(model, vocab, task, probe_config);

  std::vector<ProbeExample> test;
  test.reserve(task.test_idx.size());
  for (std::size_t i : task.test_idx) test.push_back(task.examples[i]);
  std::vector<std::size_t> all(test.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  Rng rng = Rng(transform_seed).derive("synonym_swap");
  const std::vector<ProbeExample> transformed =
      synonym_swap(test, table, rng, swap_fraction);

  RobustnessReport r;
  r.n_test = test.size();
  r.transform_name = "synonym_swap";
  r.metric_original = eval_probe(model, clf, vocab, test, all);
  r.metric_transformed = eval_probe(model, clf, vocab, transformed, all);
  r.delta = r.metric_transformed - r.metric_original;
  std::size_t altered = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    altered += transformed[i].text != test[i].text ? 1 : 0;
  }
  r.altered_fraction =
      test.empty() ? 0.0
                   : static_cast<double>(altered) /
                         static_cast<double>(test.size());
  return r;
}

// ---------------------------------------------------------------------------
// train_probe implementation
// ---------------------------------------------------------------------------

template <typename T>
ProbeClassifier<T> train_probe(Model<T>& model, const Vocab& vocab,
                               const ProbeTask& task,
                               const ProbeConfig& config) {
  for (std::size_t c = 0; c < task.n_classes; ++c) {
    bool found = false;
    for (std::size_t i : task.train_idx) {
      found = found ||
              task.examples[i].label == static_cast<int>(c);
    }
    if (!found) {
      throw std::invalid_argument("train_probe: class " + std::to_string(c) +
                                  " missing from the train split");
    }
  }
  const std::size_t d = model.config.d_model;
  ProbeClassifier<T> clf;
  clf.weight = Tensor<T>({d, task.n_classes}, /*requires_grad=*/true);
  clf.bias = Tensor<T>({task.n_classes}, /*requires_grad=*/true);

  const std::vector<int> train_labels =
      detail::labels_at(task.examples, task.train_idx);
  const std::vector<int> val_labels =
      detail::labels_at(task.examples, task.val_idx);
  const std::vector<std::uint8_t> all_train(train_labels.size(), 1);

  NamedParams<T> probe_params;
  probe_params.emplace_back("probe.weight", clf.weight);
  probe_params.emplace_back("probe.bias", clf.bias);

  double best_val = -1.0;
  std::vector<T> best_w, best_b;
  auto snapshot = [&]() {
    best_w.assign(clf.weight.data(), clf.weight.data() + clf.weight.size());
    best_b.assign(clf.bias.data(), clf.bias.data() + clf.bias.size());
  };
  snapshot();

  if (!config.finetune) {
    const Tensor<T> x_train =
        detail::cls_features(model, vocab, task.examples, task.train_idx);
    const Tensor<T> x_val =
        detail::cls_features(model, vocab, task.examples, task.val_idx);
    AdamState<T> adam = AdamState<T>::init(probe_params, config.learning_rate,
                                           /*weight_decay=*/0.0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      Tape<T> tape;
      {
        TapeScope<T> scope(&tape);
        Tensor<T> logits = add_rows(matmul(x_train, clf.weight), clf.bias);
        Tensor<T> loss = cross_entropy(logits, train_labels, all_train);
        backward(loss);
      }
      adam_step(probe_params, adam);
      zero_grads(probe_params);
      const double val_acc = detail::label_accuracy(
          detail::classify(clf, x_val), val_labels);
      if (val_acc > best_val) {
        best_val = val_acc;
        snapshot();
      }
    }
  } else {
    NamedParams<T> joint = model.parameters();
    for (auto& p : probe_params) joint.push_back(p);
    AdamState<T> adam =
        AdamState<T>::init(joint, config.finetune_lr, /*weight_decay=*/0.0);
    const Rng root(config.seed);

    // Best-epoch snapshots cover the encoder too.
    std::vector<std::vector<T>> best_model;
    auto snapshot_model = [&]() {
      best_model.clear();
      for (auto& [name, p] : joint) {
        (void)name;
        best_model.emplace_back(p.data(), p.data() + p.size());
      }
    };
    snapshot_model();

    for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
      std::vector<std::size_t> order = task.train_idx;
      Rng order_rng = root.derive("probe_order", epoch);
      order_rng.shuffle(order);
      Rng drop_rng = root.derive("probe_dropout", epoch);
      for (std::size_t begin = 0; begin < order.size();
           begin += config.finetune_batch) {
        const std::size_t end =
            std::min(begin + config.finetune_batch, order.size());
        Tape<T> tape;
        {
          TapeScope<T> scope(&tape);
          std::vector<Tensor<T>> rows;
          std::vector<int> labels;
          for (std::size_t i = begin; i < end; ++i) {
            const TokenSequence seq = encode(task.examples[order[i]].text,
                                             vocab, model.config.max_len);
            std::vector<std::uint8_t> attention(seq.ids.size(), 1);
            Tensor<T> h = forward_sequence(model, seq.ids, attention,
                                           /*train_mode=*/true, &drop_rng);
            rows.push_back(gather_rows(h, {0}));
            labels.push_back(task.examples[order[i]].label);
          }
          // Stack CLS rows into one matrix via column concat of transposes.
          Tensor<T> feats = rows.size() == 1 ? rows[0] : [&] {
            std::vector<Tensor<T>> cols;
            cols.reserve(rows.size());
            for (auto& r : rows) cols.push_back(transpose(r));
            return transpose(concat_cols(cols));
          }();
          Tensor<T> logits = add_rows(matmul(feats, clf.weight), clf.bias);
          std::vector<std::uint8_t> sel(labels.size(), 1);
          Tensor<T> loss = cross_entropy(logits, labels, sel);
          backward(loss);
        }
        // The probe loss does not reach the MLM output bias; give every
        // joint parameter a (possibly zero) gradient before stepping.
        for (auto& [name, p] : joint) {
          (void)name;
          p.ensure_grad();
        }
        clip_global_norm(joint, 1.0);
        adam_step(joint, adam);
        zero_grads(joint);
      }
      const Tensor<T> x_val =
          detail::cls_features(model, vocab, task.examples, task.val_idx);
      const double val_acc = detail::label_accuracy(
          detail::classify(clf, x_val), val_labels);
      if (val_acc > best_val) {
        best_val = val_acc;
        snapshot_model();
      }
    }
    // Restore the best epoch.
    std::size_t bi = 0;
    for (auto& [name, p] : joint) {
      (void)name;
      std::copy(best_model[bi].begin(), best_model[bi].end(), p.data());
      ++bi;
    }
    return clf;
  }

  std::copy(best_w.begin(), best_w.end(), clf.weight.data());
  std::copy(best_b.begin(), best_b.end(), clf.bias.data());
  return clf;
}

}  // namespace irlm
