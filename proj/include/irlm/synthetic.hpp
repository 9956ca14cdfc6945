// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic corpus for the probe task. Two word families
// (alpha*, beta*) plus fillers; class 1 sentences mix words from both
// families, class 0 sentences draw from exactly one. The label is a
// co-occurrence pattern, not a word count, so a linear classifier over
// raw token counts cannot separate the classes; an encoder has to.
// Every word comes in three spelling variants that the emitted synonym
// table maps to each other, which makes synonym swaps label-preserving
// by construction.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irlm/eval.hpp"
#include "irlm/rng.hpp"

namespace irlm {

struct SyntheticSpec {
  std::size_t words_per_family = 6;
  std::size_t fillers = 16;
  std::size_t pretrain_sentences = 1500;
  std::size_t heldout_sentences = 200;
  std::size_t probe_examples = 600;
  std::size_t min_len = 8;
  std::size_t max_len = 14;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SyntheticData {
  std::string corpus_path;
  std::string heldout_path;
  std::string probe_path;
  std::string synonyms_path;
};

/// One sentence of the given class; exposed for tests.
std::string synthetic_sentence(const SyntheticSpec& spec, int label, Rng& rng);

/// Labeled probe examples, classes exactly balanced.
std::vector<ProbeExample> synthetic_probe_examples(const SyntheticSpec& spec);

/// The word -> sibling-variants table matching the generator's vocabulary.
SynonymTable synthetic_synonym_table(const SyntheticSpec& spec);

/// Writes corpus.txt, heldout.txt, probe.tsv and synonyms.tsv under dir.
SyntheticData generate_synthetic_data(const SyntheticSpec& spec,
                                      const std::string& dir);

}  // namespace irlm
