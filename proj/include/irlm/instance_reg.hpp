// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Instance regularization: fills predictions back into the corrupted
// sequence, turns hidden states into per-position distributions via a
// softmax along the hidden dimension, and scores the corruption and
// prediction penalties as position-averaged divergences against the
// original-sequence hidden states.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "irlm/model.hpp"
#include "irlm/ops.hpp"
#include "irlm/tensor.hpp"
#include "irlm/text.hpp"

namespace irlm {

/// Distance between per-position hidden distributions.
enum class RegDistance : std::uint8_t { kKl, kMse };

/// Which positions enter the per-sequence average.
enum class RegPositions : std::uint8_t { kAllReal, kMaskedOnly };

struct RegularizerConfig {
  double weight_ecp = 1.0;
  double weight_dpp = 1.0;
  bool detach_original = true;  // original-sequence forward is a constant
  bool detach_filled = false;   // prediction-filled forward carries grads
  double epsilon_kl = 1e-8;
  RegDistance distance = RegDistance::kKl;
  bool swap_kl_direction = false;  // KL(second, first) instead
  RegPositions positions = RegPositions::kAllReal;

  void validate() const {
    if (weight_ecp < 0.0 || weight_dpp < 0.0) {
      throw std::invalid_argument(
          "RegularizerConfig: weights must be non-negative");
    }
    if (epsilon_kl <= 0.0) {
      throw std::invalid_argument("RegularizerConfig: epsilon_kl must be > 0");
    }
  }
};

/// The corrupted sequence with predictions written at the masked positions.
struct FilledSequence {
  std::vector<int> ids;
  std::vector<std::size_t> masked_positions;
};

/// Substitutes predictions[i] at masked_positions[i]; every other position
/// (including random-replacement and kept positions) is untouched.
inline FilledSequence fill_back(const TokenSequence& corrupted,
                                const std::vector<std::size_t>& masked_positions,
                                const std::vector<int>& predictions) {
  if (predictions.size() != masked_positions.size()) {
    throw std::invalid_argument(
        "fill_back: " + std::to_string(predictions.size()) +
        " predictions for " + std::to_string(masked_positions.size()) +
        " masked positions");
  }
  FilledSequence out;
  out.ids = corrupted.ids;
  out.masked_positions = masked_positions;
  for (std::size_t i = 0; i < masked_positions.size(); ++i) {
    const std::size_t pos = masked_positions[i];
    if (pos >= out.ids.size()) {
      throw std::invalid_argument("fill_back: position " +
                                  std::to_string(pos) +
                                  " outside sequence of length " +
                                  std::to_string(out.ids.size()));
    }
    if (predictions[i] == Vocab::kMask) {
      throw std::invalid_argument(
          "fill_back: prediction at position " + std::to_string(pos) +
          " is the mask symbol; filled sequences must not contain it");
    }
    out.ids[pos] = predictions[i];
  }
  return out;
}

/// Softmax along the hidden dimension, independently per position.
template <typename T>
Tensor<T> hidden_to_distribution(const Tensor<T>& hidden) {
  if (hidden.rank() != 2) {
    throw std::invalid_argument("hidden_to_distribution: expected rank 2, got " +
                                shape_str(hidden.shape()));
  }
  return softmax(hidden, 1);
}

template <typename T>
Tensor<T> hidden_to_distribution(const HiddenStates<T>& hidden) {
  return hidden_to_distribution(hidden.states);
}

namespace detail {

/// Mean of a per-position value vector over the positions selected by the
/// mask. Differentiable through the values.
template <typename T>
Tensor<T> masked_position_mean(const Tensor<T>& per_position,
                               const std::vector<std::uint8_t>& mask) {
  if (per_position.rank() != 1 || per_position.shape()[0] != mask.size()) {
    throw std::invalid_argument("masked_position_mean: mask length " +
                                std::to_string(mask.size()) +
                                " does not match " +
                                shape_str(per_position.shape()));
  }
  std::size_t count = 0;
  std::vector<T> mvals(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mvals[i] = mask[i] ? T(1) : T(0);
    count += mask[i] ? 1 : 0;
  }
  if (count == 0) {
    throw std::invalid_argument(
        "masked_position_mean: no positions selected");
  }
  Tensor<T> mask_t = Tensor<T>::from_values({mask.size()}, std::move(mvals));
  return scale(sum_all(mul(per_position, mask_t)),
               T(1) / static_cast<T>(count));
}

}  // namespace detail

/// Mean squared elementwise difference of two distribution matrices over the
/// selected positions. Drop-in alternative to the KL route.
template <typename T>
Tensor<T> mse_distance(const Tensor<T>& dist_a, const Tensor<T>& dist_b,
                       const std::vector<std::uint8_t>& mask) {
  detail::check_same_shape("mse_distance", dist_a, dist_b);
  if (dist_a.rank() != 2) {
    throw std::invalid_argument("mse_distance: expected rank 2, got " +
                                shape_str(dist_a.shape()));
  }
  Tensor<T> diff = sub(dist_a, dist_b);
  Tensor<T> sq = mul(diff, diff);
  Tensor<T> row_means =
      scale(sum_axis(sq, 1), T(1) / static_cast<T>(dist_a.shape()[1]));
  return detail::masked_position_mean(row_means, mask);
}

namespace detail {

template <typename T>
Tensor<T> distribution_distance(const Tensor<T>& first, const Tensor<T>& second,
                                const std::vector<std::uint8_t>& mask,
                                const RegularizerConfig& config) {
  check_same_shape("distribution_distance", first, second);
  Tensor<T> da = hidden_to_distribution(first);
  Tensor<T> db = hidden_to_distribution(second);
  if (config.distance == RegDistance::kMse) {
    return mse_distance(da, db, mask);
  }
  const T eps = static_cast<T>(config.epsilon_kl);
  Tensor<T> per_position = config.swap_kl_direction
                               ? kl_divergence(db, da, 1, eps)
                               : kl_divergence(da, db, 1, eps);
  return masked_position_mean(per_position, mask);
}

}  // namespace detail

/// Ennoising corruption penalty: position-averaged divergence between the
/// corrupted-input and original-input hidden distributions. The original
/// side is a constant target when it was computed without gradient tracking
/// (the detach_original policy).
template <typename T>
Tensor<T> ecp(const HiddenStates<T>& h_corrupted,
              const HiddenStates<T>& h_original,
              const std::vector<std::uint8_t>& mask,
              const RegularizerConfig& config) {
  if (h_corrupted.provenance != Provenance::kCorrupted ||
      h_original.provenance != Provenance::kOriginal) {
    throw std::invalid_argument(
        std::string("ecp: provenance mismatch, got (") +
        provenance_name(h_corrupted.provenance) + ", " +
        provenance_name(h_original.provenance) +
        "), expected (corrupted, original)");
  }
  return detail::distribution_distance(h_corrupted.states, h_original.states,
                                       mask, config);
}

/// Denoising prediction penalty: same distance with the prediction-filled
/// forward in the first slot. Gradient flows through the filled side unless
/// it was computed detached.
template <typename T>
Tensor<T> dpp(const HiddenStates<T>& h_filled,
              const HiddenStates<T>& h_original,
              const std::vector<std::uint8_t>& mask,
              const RegularizerConfig& config) {
  if (h_filled.provenance != Provenance::kFilled ||
      h_original.provenance != Provenance::kOriginal) {
    throw std::invalid_argument(
        std::string("dpp: provenance mismatch, got (") +
        provenance_name(h_filled.provenance) + ", " +
        provenance_name(h_original.provenance) +
        "), expected (filled, original)");
  }
  return detail::distribution_distance(h_filled.states, h_original.states,
                                       mask, config);
}

/// The four scalars of one training step.
struct LossBreakdown {
  std::uint64_t step = 0;
  double l_dae = 0.0;
  double l_ecp = 0.0;
  double l_dpp = 0.0;
  double l_total = 0.0;
  double learning_rate = 0.0;
  double wall_time = 0.0;
};

template <typename T>
struct RegularizedLoss {
  Tensor<T> total;
  LossBreakdown breakdown;
};

/// L = l_dae + weight_ecp * l_ecp + weight_dpp * l_dpp, with all four
/// values recorded. Throws std::domain_error naming the first non-finite
/// input term.
template <typename T>
RegularizedLoss<T> regularized_loss(const Tensor<T>& l_dae,
                                    const Tensor<T>& l_ecp,
                                    const Tensor<T>& l_dpp,
                                    const RegularizerConfig& config) {
  config.validate();
  const struct {
    const char* name;
    const Tensor<T>* t;
  } terms[] = {{"l_dae", &l_dae}, {"l_ecp", &l_ecp}, {"l_dpp", &l_dpp}};
  for (const auto& term : terms) {
    if (!std::isfinite(static_cast<double>(term.t->item()))) {
      throw std::domain_error(std::string("regularized_loss: non-finite ") +
                              term.name + " = " +
                              std::to_string(static_cast<double>(
                                  term.t->item())));
    }
  }
  RegularizedLoss<T> out;
  out.total = add(l_dae, add(scale(l_ecp, static_cast<T>(config.weight_ecp)),
                             scale(l_dpp, static_cast<T>(config.weight_dpp))));
  out.breakdown.l_dae = static_cast<double>(l_dae.item());
  out.breakdown.l_ecp = static_cast<double>(l_ecp.item());
  out.breakdown.l_dpp = static_cast<double>(l_dpp.item());
  out.breakdown.l_total = static_cast<double>(out.total.item());
  return out;
}

}  // namespace irlm
