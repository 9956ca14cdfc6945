// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace irlm {

namespace {

constexpr const char* kVariantSuffix[3] = {"", "q", "z"};

std::string family_word(int family, std::size_t base, std::size_t variant) {
  const char* prefix = family == 0 ? "alpha" : "beta";
  return prefix + std::to_string(base) + kVariantSuffix[variant];
}

std::string filler_word(std::size_t base, std::size_t variant) {
  return "filler" + std::to_string(base) + kVariantSuffix[variant];
}

}  // namespace

void SyntheticSpec::validate() const {
  if (words_per_family < 2 || fillers < 2) {
    throw std::invalid_argument(
        "SyntheticSpec: need at least 2 words per family and 2 fillers");
  }
  if (min_len < 8 || max_len < min_len) {
    throw std::invalid_argument(
        "SyntheticSpec: need min_len >= 8 (room for up to 6 signal words) "
        "and max_len >= min_len");
  }
  if (probe_examples < 40) {
    throw std::invalid_argument(
        "SyntheticSpec: probe_examples too small for stratified splits");
  }
}

std::string synthetic_sentence(const SyntheticSpec& spec, int label,
                               Rng& rng) {
  const std::size_t len =
      spec.min_len + rng.uniform_int(spec.max_len - spec.min_len + 1);
  std::vector<std::string> tokens;
  tokens.reserve(len);
  auto push_family = [&](int family) {
    tokens.push_back(family_word(family, rng.uniform_int(spec.words_per_family),
                                 rng.uniform_int(3)));
  };
  if (label == 1) {
    // Mixed: both families present, 4-6 signal words total.
    const std::size_t k_a = 2 + rng.uniform_int(2);
    const std::size_t k_b = 2 + rng.uniform_int(2);
    for (std::size_t i = 0; i < k_a; ++i) push_family(0);
    for (std::size_t i = 0; i < k_b; ++i) push_family(1);
  } else {
    // Pure: 4-6 signal words from a single family.
    const int family = static_cast<int>(rng.uniform_int(2));
    const std::size_t k = 4 + rng.uniform_int(3);
    for (std::size_t i = 0; i < k; ++i) push_family(family);
  }
  while (tokens.size() < len) {
    tokens.push_back(
        filler_word(rng.uniform_int(spec.fillers), rng.uniform_int(3)));
  }
  rng.shuffle(tokens);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<ProbeExample> synthetic_probe_examples(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).derive("probe_data");
  std::vector<ProbeExample> out;
  out.reserve(spec.probe_examples);
  for (std::size_t i = 0; i < spec.probe_examples; ++i) {
    ProbeExample ex;
    ex.label = static_cast<int>(i % 2);
    ex.text = synthetic_sentence(spec, ex.label, rng);
    out.push_back(std::move(ex));
  }
  return out;
}

SynonymTable synthetic_synonym_table(const SyntheticSpec& spec) {
  spec.validate();
  SynonymTable table;
  auto add_triple = [&](const std::string& a, const std::string& b,
                        const std::string& c) {
    table.entries[a] = {b, c};
    table.entries[b] = {a, c};
    table.entries[c] = {a, b};
  };
  for (int family = 0; family < 2; ++family) {
    for (std::size_t w = 0; w < spec.words_per_family; ++w) {
      add_triple(family_word(family, w, 0), family_word(family, w, 1),
                 family_word(family, w, 2));
    }
  }
  for (std::size_t w = 0; w < spec.fillers; ++w) {
    add_triple(filler_word(w, 0), filler_word(w, 1), filler_word(w, 2));
  }
  table.validate();
  return table;
}

SyntheticData generate_synthetic_data(const SyntheticSpec& spec,
                                      const std::string& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  SyntheticData paths;
  paths.corpus_path = dir + "/corpus.txt";
  paths.heldout_path = dir + "/heldout.txt";
  paths.probe_path = dir + "/probe.tsv";
  paths.synonyms_path = dir + "/synonyms.tsv";

  auto write_sentences = [&](const std::string& path, const char* stream,
                             std::size_t count) {
    std::ofstream out(path);
    if (!out) {
      throw std::runtime_error("generate_synthetic_data: cannot open '" +
                               path + "'");
    }
    Rng rng = Rng(spec.seed).derive(stream);
    for (std::size_t i = 0; i < count; ++i) {
      out << synthetic_sentence(spec, static_cast<int>(i % 2), rng) << "\n";
    }
  };
  write_sentences(paths.corpus_path, "corpus_data", spec.pretrain_sentences);
  write_sentences(paths.heldout_path, "heldout_data", spec.heldout_sentences);

  {
    std::ofstream out(paths.probe_path);
    if (!out) {
      throw std::runtime_error("generate_synthetic_data: cannot open '" +
                               paths.probe_path + "'");
    }
    for (const auto& ex : synthetic_probe_examples(spec)) {
      out << ex.label << "\t" << ex.text << "\n";
    }
  }
  save_synonym_table(synthetic_synonym_table(spec), paths.synonyms_path);
  return paths;
}

}  // namespace irlm
