// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion, vocabulary construction, whitespace tokenization and
// padded batch assembly. The tokenizer lowercases and splits on whitespace;
// subword schemes can be swapped in behind encode()/decode().

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "irlm/rng.hpp"

namespace irlm {

/// Token/id bijection. Ids 0-4 are always the five specials.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr std::size_t kNumSpecials = 5;

  Vocab();

  /// Specials plus the given tokens, in order.
  static Vocab with_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return id_to_token_.size(); }

  /// Id for a token; UNK when absent.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const;

  /// Token string for an id; throws std::out_of_range for invalid ids.
  const std::string& token_of(int id) const;

  static bool is_special(int id) {
    return id >= 0 && id < static_cast<int>(kNumSpecials);
  }

 private:
  void append(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Token ids for one sentence; begins with CLS, ends with SEP.
struct TokenSequence {
  std::vector<int> ids;

  std::size_t length() const { return ids.size(); }
};

/// Padded id matrix with attention mask; one row per sequence.
struct Batch {
  std::vector<std::vector<int>> ids;               // batch x width, PAD-filled
  std::vector<std::vector<std::uint8_t>> attention;  // 1 real token, 0 padding
  std::vector<std::size_t> lengths;                // true lengths
  std::vector<std::size_t> seq_indices;  // source positions, keys RNG streams
  std::size_t width = 0;

  std::size_t size() const { return ids.size(); }
};

/// Most frequent whitespace tokens of a one-sentence-per-line UTF-8 corpus.
/// max_size caps the non-special tokens; ties break lexicographically.
Vocab build_vocab(const std::string& corpus_path, std::size_t min_frequency,
                  std::size_t max_size);

/// One token per line, line number = id, specials first.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

/// Lowercased whitespace tokens of a line.
std::vector<std::string> tokenize(const std::string& text);

/// CLS + token ids (UNK for misses) + SEP, truncated to max_len with SEP
/// kept as the final token.
TokenSequence encode(const std::string& text, const Vocab& vocab,
                     std::size_t max_len);

/// Space-joined tokens. PAD/CLS/SEP are omitted; UNK and MASK render as
/// their bracket forms since they occupy content positions.
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

/// Seeded shuffle, grouping, per-batch padding to the batch's longest
/// sequence. The final partial batch is kept.
std::vector<Batch> make_batches(const std::vector<TokenSequence>& sequences,
                                std::size_t batch_size, Rng& rng);

/// Encodes every non-empty line. Sequences with no maskable (non-special)
/// position are dropped; *dropped reports how many, when non-null.
std::vector<TokenSequence> load_corpus(const std::string& path,
                                       const Vocab& vocab, std::size_t max_len,
                                       std::size_t* dropped = nullptr);

}  // namespace irlm
