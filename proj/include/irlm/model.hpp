// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer encoder with learned positional embeddings and an
// MLM head tied to the token embeddings. forward() yields the last-layer
// hidden states per sequence, tagged with which input produced them.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irlm/adam.hpp"
#include "irlm/ops.hpp"
#include "irlm/rng.hpp"
#include "irlm/tensor.hpp"
#include "irlm/text.hpp"

namespace irlm {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;
  double dropout_rate = 0.1;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument listing every violation.
  void validate() const {
    std::string errors;
    auto fail = [&](const std::string& msg) {
      if (!errors.empty()) errors += "; ";
      errors += msg;
    };
    if (n_layers == 0) fail("n_layers must be >= 1");
    if (n_heads == 0) fail("n_heads must be >= 1");
    if (d_model == 0) fail("d_model must be >= 1");
    if (n_heads != 0 && d_model % n_heads != 0) {
      fail("d_model (" + std::to_string(d_model) +
           ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (d_ff == 0) fail("d_ff must be >= 1");
    if (vocab_size <= Vocab::kNumSpecials) {
      fail("vocab_size must exceed the " +
           std::to_string(Vocab::kNumSpecials) + " specials");
    }
    if (max_len < 2) fail("max_len must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      fail("dropout_rate must be in [0, 1)");
    }
    if (!errors.empty()) {
      throw std::invalid_argument("ModelConfig: " + errors);
    }
  }
};

/// Which input sequence a hidden-state matrix came from.
enum class Provenance : std::uint8_t {
  kCorrupted,  // W'
  kOriginal,   // W
  kFilled,     // P
};

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kCorrupted: return "corrupted";
    case Provenance::kOriginal: return "original";
    case Provenance::kFilled: return "filled";
  }
  return "?";
}

/// Last-encoder-layer outputs for one sequence (rows = positions).
template <typename T>
struct HiddenStates {
  Tensor<T> states;  // [seq_len, d_model]
  Provenance provenance = Provenance::kCorrupted;
};

template <typename T>
struct EncoderLayer {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w_ff1, b_ff1, w_ff2, b_ff2;
};

template <typename T>
struct Model {
  ModelConfig config;
  Tensor<T> tok_emb;  // [vocab, d_model], tied with the MLM head
  Tensor<T> pos_emb;  // [max_len, d_model]
  std::vector<EncoderLayer<T>> layers;
  Tensor<T> final_ln_gain, final_ln_bias;
  Tensor<T> out_bias;  // [vocab]

  /// Stable-ordered named parameter list; the tensors share storage with
  /// the model, so optimizer updates are visible here and vice versa.
  NamedParams<T> parameters() const {
    NamedParams<T> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lay = layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      out.emplace_back(p + "ln1_gain", lay.ln1_gain);
      out.emplace_back(p + "ln1_bias", lay.ln1_bias);
      out.emplace_back(p + "wq", lay.wq);
      out.emplace_back(p + "bq", lay.bq);
      out.emplace_back(p + "wk", lay.wk);
      out.emplace_back(p + "bk", lay.bk);
      out.emplace_back(p + "wv", lay.wv);
      out.emplace_back(p + "bv", lay.bv);
      out.emplace_back(p + "wo", lay.wo);
      out.emplace_back(p + "bo", lay.bo);
      out.emplace_back(p + "ln2_gain", lay.ln2_gain);
      out.emplace_back(p + "ln2_bias", lay.ln2_bias);
      out.emplace_back(p + "w_ff1", lay.w_ff1);
      out.emplace_back(p + "b_ff1", lay.b_ff1);
      out.emplace_back(p + "w_ff2", lay.w_ff2);
      out.emplace_back(p + "b_ff2", lay.b_ff2);
    }
    out.emplace_back("final_ln_gain", final_ln_gain);
    out.emplace_back("final_ln_bias", final_ln_bias);
    out.emplace_back("out_bias", out_bias);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : parameters()) {
      (void)name;
      n += p.size();
    }
    return n;
  }
};

namespace detail {

template <typename T>
Tensor<T> init_normal(Shape shape, Rng& rng, double stddev) {
  Tensor<T> t(std::move(shape), /*requires_grad=*/true);
  T* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    p[i] = static_cast<T>(rng.normal() * stddev);
  }
  return t;
}

template <typename T>
Tensor<T> init_const(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, /*requires_grad=*/true);
}

}  // namespace detail

/// Fresh model: weights N(0, 0.02^2), biases zero, layer-norm gain one.
/// Same seed, same bits.
template <typename T>
Model<T> init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  constexpr double kStd = 0.02;
  Model<T> m;
  m.config = config;
  const std::size_t d = config.d_model, f = config.d_ff, v = config.vocab_size;
  m.tok_emb = detail::init_normal<T>({v, d}, rng, kStd);
  m.pos_emb = detail::init_normal<T>({config.max_len, d}, rng, kStd);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayer<T> lay;
    lay.ln1_gain = detail::init_const<T>({d}, T(1));
    lay.ln1_bias = detail::init_const<T>({d}, T(0));
    lay.wq = detail::init_normal<T>({d, d}, rng, kStd);
    lay.bq = detail::init_const<T>({d}, T(0));
    lay.wk = detail::init_normal<T>({d, d}, rng, kStd);
    lay.bk = detail::init_const<T>({d}, T(0));
    lay.wv = detail::init_normal<T>({d, d}, rng, kStd);
    lay.bv = detail::init_const<T>({d}, T(0));
    lay.wo = detail::init_normal<T>({d, d}, rng, kStd);
    lay.bo = detail::init_const<T>({d}, T(0));
    lay.ln2_gain = detail::init_const<T>({d}, T(1));
    lay.ln2_bias = detail::init_const<T>({d}, T(0));
    lay.w_ff1 = detail::init_normal<T>({d, f}, rng, kStd);
    lay.b_ff1 = detail::init_const<T>({f}, T(0));
    lay.w_ff2 = detail::init_normal<T>({f, d}, rng, kStd);
    lay.b_ff2 = detail::init_const<T>({d}, T(0));
    m.layers.push_back(std::move(lay));
  }
  m.final_ln_gain = detail::init_const<T>({d}, T(1));
  m.final_ln_bias = detail::init_const<T>({d}, T(0));
  m.out_bias = detail::init_const<T>({v}, T(0));
  return m;
}

/// Optional hook for inspecting attention inside forward_sequence.
template <typename T>
struct AttentionCapture {
  std::vector<Tensor<T>> probs;  // one [n, n] matrix per (layer, head)
};

/// Runs one (possibly padded) sequence through the encoder. Attention
/// logits at padded keys are -inf before the softmax, so padding never
/// contributes to real positions. Dropout draws from rng only in train
/// mode; eval forwards are deterministic.
template <typename T>
Tensor<T> forward_sequence(const Model<T>& model, const std::vector<int>& ids,
                           const std::vector<std::uint8_t>& attention,
                           bool train_mode, Rng* rng,
                           AttentionCapture<T>* capture = nullptr) {
  const auto& cfg = model.config;
  const std::size_t n = ids.size();
  if (n == 0) throw std::invalid_argument("forward: empty sequence");
  if (n > cfg.max_len) {
    throw std::invalid_argument(
        "forward: sequence length " + std::to_string(n) +
        " exceeds max_len " + std::to_string(cfg.max_len));
  }
  if (attention.size() != n) {
    throw std::invalid_argument("forward: attention mask length mismatch");
  }
  if (train_mode && cfg.dropout_rate > 0.0 && rng == nullptr) {
    throw std::invalid_argument("forward: train mode needs an RNG");
  }
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;

  // -inf bias at padded key columns, shared across layers and heads.
  Tensor<T> key_bias({n, n});
  {
    T* pb = key_bias.data();
    const T neg_inf = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        pb[i * n + j] = attention[j] ? T(0) : neg_inf;
      }
    }
  }

  std::vector<std::size_t> pos_rows(n);
  for (std::size_t i = 0; i < n; ++i) pos_rows[i] = i;

  Tensor<T> x = add(embedding_lookup(model.tok_emb, ids),
                    gather_rows(model.pos_emb, pos_rows));
  const bool use_dropout = train_mode && cfg.dropout_rate > 0.0;
  if (use_dropout) x = dropout(x, cfg.dropout_rate, *rng);

  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
  for (const auto& lay : model.layers) {
    // Attention sublayer.
    Tensor<T> h = layer_norm(x, lay.ln1_gain, lay.ln1_bias);
    Tensor<T> q = add_rows(matmul(h, lay.wq), lay.bq);
    Tensor<T> k = add_rows(matmul(h, lay.wk), lay.bk);
    Tensor<T> v = add_rows(matmul(h, lay.wv), lay.bv);
    std::vector<Tensor<T>> ctx;
    ctx.reserve(heads);
    for (std::size_t head = 0; head < heads; ++head) {
      Tensor<T> qh = slice_cols(q, head * dh, dh);
      Tensor<T> kh = slice_cols(k, head * dh, dh);
      Tensor<T> vh = slice_cols(v, head * dh, dh);
      Tensor<T> scores =
          add(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), key_bias);
      Tensor<T> probs = softmax(scores, 1);
      if (capture) capture->probs.push_back(probs);
      ctx.push_back(matmul(probs, vh));
    }
    Tensor<T> attn_out = add_rows(matmul(concat_cols(ctx), lay.wo), lay.bo);
    if (use_dropout) attn_out = dropout(attn_out, cfg.dropout_rate, *rng);
    x = add(x, attn_out);

    // Feed-forward sublayer.
    Tensor<T> h2 = layer_norm(x, lay.ln2_gain, lay.ln2_bias);
    Tensor<T> ff = add_rows(matmul(h2, lay.w_ff1), lay.b_ff1);
    ff = gelu(ff);
    ff = add_rows(matmul(ff, lay.w_ff2), lay.b_ff2);
    if (use_dropout) ff = dropout(ff, cfg.dropout_rate, *rng);
    x = add(x, ff);
  }
  return layer_norm(x, model.final_ln_gain, model.final_ln_bias);
}

/// Batch forward; one HiddenStates per sequence, tagged with provenance.
template <typename T>
std::vector<HiddenStates<T>> forward(const Model<T>& model, const Batch& batch,
                                     bool train_mode, Provenance provenance,
                                     Rng* rng = nullptr) {
  for (const auto& row : batch.ids) {
    for (int id : row) {
      if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab_size) {
        throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                    " outside vocabulary of size " +
                                    std::to_string(model.config.vocab_size));
      }
    }
  }
  std::vector<HiddenStates<T>> out;
  out.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    HiddenStates<T> h;
    h.states = forward_sequence(model, batch.ids[s], batch.attention[s],
                                train_mode, rng);
    h.provenance = provenance;
    out.push_back(std::move(h));
  }
  return out;
}

/// Vocabulary logits through the tied MLM head: h * tok_emb^T + out_bias.
template <typename T>
Tensor<T> mlm_logits(const Model<T>& model, const Tensor<T>& hidden) {
  if (hidden.rank() != 2 || hidden.shape()[1] != model.config.d_model) {
    throw std::invalid_argument("mlm_logits: hidden shape " +
                                shape_str(hidden.shape()) +
                                " does not match d_model " +
                                std::to_string(model.config.d_model));
  }
  return add_rows(matmul(hidden, transpose(model.tok_emb)), model.out_bias);
}

template <typename T>
Tensor<T> mlm_logits(const Model<T>& model, const HiddenStates<T>& hidden) {
  return mlm_logits(model, hidden.states);
}

/// Argmax over the vocabulary at each listed row; ties break to the lowest
/// id. No gradient flows through the choice.
template <typename T>
std::vector<int> predict_masked(const Model<T>& model, const Tensor<T>& logits,
                                const std::vector<std::size_t>& positions) {
  if (logits.rank() != 2 || logits.shape()[1] != model.config.vocab_size) {
    throw std::invalid_argument("predict_masked: logits shape " +
                                shape_str(logits.shape()) +
                                " does not match vocab size " +
                                std::to_string(model.config.vocab_size));
  }
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  std::vector<int> out;
  out.reserve(positions.size());
  const T* pl = logits.data();
  for (std::size_t pos : positions) {
    if (pos >= n) {
      throw std::invalid_argument("predict_masked: position " +
                                  std::to_string(pos) + " out of range [0, " +
                                  std::to_string(n) + ")");
    }
    const T* row = pl + pos * v;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

}  // namespace irlm
