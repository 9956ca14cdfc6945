// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/ennoise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace irlm {

void EnnoiseConfig::validate() const {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw std::invalid_argument("EnnoiseConfig: mask_ratio must be in (0, 1)");
  }
  if (p_mask < 0.0 || p_random < 0.0 || p_keep < 0.0 ||
      std::abs(p_mask + p_random + p_keep - 1.0) > 1e-9) {
    throw std::invalid_argument(
        "EnnoiseConfig: p_mask + p_random + p_keep must equal 1");
  }
}

EnnoisedInstance ennoise(const TokenSequence& seq, const EnnoiseConfig& config,
                         Rng& rng, std::size_t vocab_size) {
  config.validate();
  if (vocab_size <= Vocab::kNumSpecials) {
    throw std::invalid_argument(
        "ennoise: vocabulary has no non-special tokens");
  }
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!Vocab::is_special(seq.ids[i])) maskable.push_back(i);
  }
  if (maskable.empty()) {
    throw std::invalid_argument("ennoise: sequence has no maskable position");
  }

  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(
             config.mask_ratio * static_cast<double>(maskable.size()) + 0.5)));

  // Partial Fisher-Yates: the first m entries are a uniform sample without
  // replacement.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(maskable.size() - i));
    std::swap(maskable[i], maskable[j]);
  }
  std::vector<std::size_t> positions(maskable.begin(),
                                     maskable.begin() + static_cast<long>(m));
  std::sort(positions.begin(), positions.end());

  EnnoisedInstance inst;
  inst.original = seq;
  inst.corrupted = seq;
  inst.masked_positions = positions;
  inst.maskable_count = 0;
  for (int id : seq.ids) {
    if (!Vocab::is_special(id)) ++inst.maskable_count;
  }
  inst.labels.reserve(m);
  const std::size_t non_special = vocab_size - Vocab::kNumSpecials;
  for (std::size_t pos : positions) {
    inst.labels.push_back(seq.ids[pos]);
    const double u = rng.uniform();
    if (u < config.p_mask) {
      inst.corrupted.ids[pos] = Vocab::kMask;
    } else if (u < config.p_mask + config.p_random) {
      inst.corrupted.ids[pos] = static_cast<int>(
          Vocab::kNumSpecials + rng.uniform_int(non_special));
    }
    // else: kept unchanged, still a masked position
  }
  return inst;
}

double corruption_rate(const EnnoisedInstance& instance) {
  if (instance.maskable_count == 0) return 0.0;
  return static_cast<double>(instance.masked_positions.size()) /
         static_cast<double>(instance.maskable_count);
}

}  // namespace irlm
