// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// MLM instance construction: picks masked positions uniformly without
// replacement and applies the 80/10/10 mask/random/keep replacement split.

#pragma once

#include <cstdint>
#include <vector>

#include "irlm/rng.hpp"
#include "irlm/text.hpp"

namespace irlm {

struct EnnoiseConfig {
  double mask_ratio = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One corrupted training instance. The corrupted sequence agrees with the
/// original everywhere outside masked_positions; labels hold the original
/// tokens at those positions. A position chosen but "kept unchanged" still
/// appears in masked_positions and trains the MLM head.
struct EnnoisedInstance {
  TokenSequence original;
  TokenSequence corrupted;
  std::vector<std::size_t> masked_positions;  // sorted ascending
  std::vector<int> labels;

  std::size_t maskable_count = 0;
};

/// Corrupts a sequence. m = max(1, round(mask_ratio * maskable_count)) with
/// round-half-up; specials (ids 0-4) are never maskable and random
/// replacements are never special. Throws std::invalid_argument when the
/// sequence has no maskable position.
EnnoisedInstance ennoise(const TokenSequence& seq, const EnnoiseConfig& config,
                         Rng& rng, std::size_t vocab_size);

/// |masked_positions| / maskable_count.
double corruption_rate(const EnnoisedInstance& instance);

}  // namespace irlm
