// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <vector>

#include "doctest.h"
#include "irlm/ennoise.hpp"
#include "irlm/rng.hpp"
#include "irlm/text.hpp"

using irlm::EnnoiseConfig;
using irlm::Rng;
using irlm::TokenSequence;
using irlm::Vocab;

namespace {

TokenSequence sequence_of(std::size_t maskable, int base_id = 5) {
  TokenSequence s;
  s.ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < maskable; ++i) {
    s.ids.push_back(base_id + static_cast<int>(i % 20));
  }
  s.ids.push_back(Vocab::kSep);
  return s;
}

constexpr std::size_t kVocabSize = 40;

}  // namespace

TEST_CASE("masked-count rule: m = max(1, round-half-up(ratio * maskable))") {
  EnnoiseConfig cfg;
  Rng rng(1);
  SUBCASE("10 maskable at 0.15 masks 2") {
    auto inst = irlm::ennoise(sequence_of(10), cfg, rng, kVocabSize);
    CHECK(inst.masked_positions.size() == 2);  // round(1.5) = 2
    CHECK(inst.maskable_count == 10);
  }
  SUBCASE("short sequences still mask one position") {
    auto inst = irlm::ennoise(sequence_of(2), cfg, rng, kVocabSize);
    CHECK(inst.masked_positions.size() == 1);
  }
  SUBCASE("the rule holds across lengths") {
    for (std::size_t maskable = 1; maskable <= 60; ++maskable) {
      auto inst = irlm::ennoise(sequence_of(maskable), cfg, rng, kVocabSize);
      const std::size_t expected = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(0.15 * static_cast<double>(maskable) + 0.5)));
      CHECK(inst.masked_positions.size() == expected);
    }
  }
  SUBCASE("no maskable position is an error") {
    TokenSequence empty;
    empty.ids = {Vocab::kCls, Vocab::kSep};
    CHECK_THROWS_AS(irlm::ennoise(empty, cfg, rng, kVocabSize),
                    std::invalid_argument);
  }
}

TEST_CASE("replacement split approaches 80/10/10") {
  EnnoiseConfig cfg;
  Rng rng(7);
  const TokenSequence seq = sequence_of(20);
  std::size_t n_mask = 0, n_random = 0, n_keep = 0, total = 0;
  while (total < 12000) {
    auto inst = irlm::ennoise(seq, cfg, rng, kVocabSize);
    for (std::size_t i = 0; i < inst.masked_positions.size(); ++i) {
      const std::size_t pos = inst.masked_positions[i];
      const int out = inst.corrupted.ids[pos];
      const int in = inst.original.ids[pos];
      if (out == Vocab::kMask) {
        ++n_mask;
      } else if (out == in) {
        ++n_keep;
      } else {
        ++n_random;
      }
      ++total;
    }
  }
  // "Kept" positions that randomly drew their own token are counted as
  // keeps above, inflating keep by ~p_random/vocab; well inside +-0.02.
  CHECK(std::abs(double(n_mask) / total - 0.80) < 0.02);
  CHECK(std::abs(double(n_random) / total - 0.10) < 0.02);
  CHECK(std::abs(double(n_keep) / total - 0.10) < 0.02);
}

TEST_CASE("ennoising preserves the reconstruction invariant") {
  EnnoiseConfig cfg;
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t maskable = 1 + rng.uniform_int(30);
    const TokenSequence seq = sequence_of(maskable);
    Rng sub = rng.derive("trial", static_cast<std::uint64_t>(trial));
    auto inst = irlm::ennoise(seq, cfg, sub, kVocabSize);

    REQUIRE(inst.labels.size() == inst.masked_positions.size());
    CHECK(std::is_sorted(inst.masked_positions.begin(),
                         inst.masked_positions.end()));

    // Substituting labels back reproduces the original exactly.
    TokenSequence rebuilt = inst.corrupted;
    for (std::size_t i = 0; i < inst.masked_positions.size(); ++i) {
      rebuilt.ids[inst.masked_positions[i]] = inst.labels[i];
    }
    CHECK(rebuilt.ids == inst.original.ids);

    // Non-masked positions agree between corrupted and original.
    std::vector<bool> is_masked(seq.ids.size(), false);
    for (std::size_t pos : inst.masked_positions) {
      is_masked[pos] = true;
      CHECK(!Vocab::is_special(inst.original.ids[pos]));
    }
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      if (!is_masked[i]) {
        CHECK(inst.corrupted.ids[i] == inst.original.ids[i]);
      }
    }

    // Labels record the original tokens.
    for (std::size_t i = 0; i < inst.masked_positions.size(); ++i) {
      CHECK(inst.labels[i] == inst.original.ids[inst.masked_positions[i]]);
    }

    // Random replacements are never special.
    for (std::size_t i = 0; i < inst.masked_positions.size(); ++i) {
      const int out = inst.corrupted.ids[inst.masked_positions[i]];
      if (out != Vocab::kMask) {
        CHECK(!Vocab::is_special(out));
      }
    }
  }
}

TEST_CASE("fixed seed reproduces the instance exactly") {
  EnnoiseConfig cfg;
  const TokenSequence seq = sequence_of(15);
  Rng r1(42), r2(42);
  auto a = irlm::ennoise(seq, cfg, r1, kVocabSize);
  auto b = irlm::ennoise(seq, cfg, r2, kVocabSize);
  CHECK(a.corrupted.ids == b.corrupted.ids);
  CHECK(a.masked_positions == b.masked_positions);
  CHECK(a.labels == b.labels);
}

TEST_CASE("position choice is uniform") {
  EnnoiseConfig cfg;
  const TokenSequence seq = sequence_of(20);
  Rng rng(13);
  std::vector<std::size_t> hits(seq.ids.size(), 0);
  const int draws = 10000;
  std::size_t m = 0;
  for (int i = 0; i < draws; ++i) {
    auto inst = irlm::ennoise(seq, cfg, rng, kVocabSize);
    m = inst.masked_positions.size();
    for (std::size_t pos : inst.masked_positions) ++hits[pos];
  }
  const double expected = static_cast<double>(m) / 20.0;
  for (std::size_t pos = 1; pos <= 20; ++pos) {
    CHECK(std::abs(double(hits[pos]) / draws - expected) < 0.02);
  }
  CHECK(hits[0] == 0);                   // CLS
  CHECK(hits[seq.ids.size() - 1] == 0);  // SEP
}

TEST_CASE("corruption_rate is |D| / maskable") {
  EnnoiseConfig cfg;
  Rng rng(17);
  SUBCASE("2 of 10") {
    irlm::EnnoisedInstance inst;
    inst.masked_positions = {1, 2};
    inst.maskable_count = 10;
    CHECK(irlm::corruption_rate(inst) == doctest::Approx(0.2));
  }
  SUBCASE("directly constructed zero-mask instance") {
    irlm::EnnoisedInstance inst;
    inst.maskable_count = 10;
    CHECK(irlm::corruption_rate(inst) == 0.0);
  }
  SUBCASE("ennoise output is always in (0, 1]") {
    for (std::size_t maskable = 1; maskable <= 40; ++maskable) {
      auto inst = irlm::ennoise(sequence_of(maskable), cfg, rng, kVocabSize);
      const double rate = irlm::corruption_rate(inst);
      CHECK(rate > 0.0);
      CHECK(rate <= 1.0);
    }
  }
}

TEST_CASE("ennoise config is validated") {
  Rng rng(1);
  EnnoiseConfig cfg;
  cfg.p_mask = 0.5;  // no longer sums to 1
  CHECK_THROWS_AS(irlm::ennoise(sequence_of(5), cfg, rng, kVocabSize),
                  std::invalid_argument);
  EnnoiseConfig cfg2;
  cfg2.mask_ratio = 1.0;
  CHECK_THROWS_AS(irlm::ennoise(sequence_of(5), cfg2, rng, kVocabSize),
                  std::invalid_argument);
}
