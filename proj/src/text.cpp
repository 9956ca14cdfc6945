// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace irlm {

namespace {
const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
}

Vocab::Vocab() {
  for (const char* s : kSpecialNames) append(s);
}

Vocab Vocab::with_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) v.append(t);
  return v;
}

void Vocab::append(const std::string& token) {
  if (token_to_id_.count(token)) {
    throw std::invalid_argument("Vocab: duplicate token '" + token + "'");
  }
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("Vocab: id " + std::to_string(id) +
                            " out of range [0, " +
                            std::to_string(id_to_token_.size()) + ")");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocab build_vocab(const std::string& corpus_path, std::size_t min_frequency,
                  std::size_t max_size) {
  std::ifstream in(corpus_path);
  if (!in) {
    throw std::runtime_error("build_vocab: cannot open '" + corpus_path + "'");
  }
  std::map<std::string, std::size_t> counts;
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    for (auto& tok : tokenize(line)) {
      ++counts[tok];
      any = true;
    }
  }
  if (in.bad()) {
    throw std::runtime_error("build_vocab: read error on '" + corpus_path +
                             "'");
  }
  if (!any) {
    throw std::runtime_error("build_vocab: empty corpus '" + corpus_path +
                             "'");
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [tok, cnt] : counts) {
    if (cnt >= min_frequency) ranked.emplace_back(tok, cnt);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, cnt] : ranked) {
    (void)cnt;
    tokens.push_back(tok);
  }
  return Vocab::with_tokens(tokens);
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_vocab: cannot open '" + path +
                             "' for writing");
  }
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    out << vocab.token_of(static_cast<int>(id)) << "\n";
  }
  if (!out) {
    throw std::runtime_error("save_vocab: write error on '" + path + "'");
  }
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_vocab: cannot open '" + path + "'");
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < Vocab::kNumSpecials) {
    throw std::runtime_error("load_vocab: '" + path +
                             "' is missing the special tokens");
  }
  for (std::size_t i = 0; i < Vocab::kNumSpecials; ++i) {
    if (lines[i] != kSpecialNames[i]) {
      throw std::runtime_error("load_vocab: line " + std::to_string(i) +
                               " must be " + kSpecialNames[i] + ", got '" +
                               lines[i] + "'");
    }
  }
  return Vocab::with_tokens(
      {lines.begin() + Vocab::kNumSpecials, lines.end()});
}

TokenSequence encode(const std::string& text, const Vocab& vocab,
                     std::size_t max_len) {
  if (max_len < 2) {
    throw std::invalid_argument("encode: max_len must be at least 2");
  }
  TokenSequence seq;
  seq.ids.push_back(Vocab::kCls);
  for (const auto& tok : tokenize(text)) {
    if (seq.ids.size() == max_len - 1) break;  // room for SEP
    seq.ids.push_back(vocab.id_of(tok));
  }
  seq.ids.push_back(Vocab::kSep);
  return seq;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token_of(id);  // validates
    if (id == Vocab::kPad || id == Vocab::kCls || id == Vocab::kSep) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<TokenSequence>& sequences,
                                std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) {
    throw std::invalid_argument("make_batches: batch_size must be >= 1");
  }
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    Batch b;
    b.width = 0;
    for (std::size_t i = begin; i < end; ++i) {
      b.width = std::max(b.width, sequences[order[i]].length());
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& seq = sequences[order[i]];
      std::vector<int> row(b.width, Vocab::kPad);
      std::vector<std::uint8_t> mask(b.width, 0);
      std::copy(seq.ids.begin(), seq.ids.end(), row.begin());
      std::fill(mask.begin(), mask.begin() + static_cast<long>(seq.length()),
                std::uint8_t{1});
      b.ids.push_back(std::move(row));
      b.attention.push_back(std::move(mask));
      b.lengths.push_back(seq.length());
      b.seq_indices.push_back(order[i]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<TokenSequence> load_corpus(const std::string& path,
                                       const Vocab& vocab, std::size_t max_len,
                                       std::size_t* dropped) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_corpus: cannot open '" + path + "'");
  }
  std::vector<TokenSequence> out;
  std::size_t skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    TokenSequence seq = encode(line, vocab, max_len);
    bool maskable = false;
    for (int id : seq.ids) maskable = maskable || !Vocab::is_special(id);
    if (maskable) {
      out.push_back(std::move(seq));
    } else {
      ++skipped;
    }
  }
  if (in.bad()) {
    throw std::runtime_error("load_corpus: read error on '" + path + "'");
  }
  if (dropped) *dropped = skipped;
  return out;
}

}  // namespace irlm
