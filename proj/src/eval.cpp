// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace irlm {

std::vector<ProbeExample> load_probe_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_probe_examples: cannot open '" + path +
                             "'");
  }
  std::vector<ProbeExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("load_probe_examples: '" + path + "' line " +
                               std::to_string(lineno) + " has no tab");
    }
    ProbeExample ex;
    try {
      ex.label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw std::runtime_error("load_probe_examples: '" + path + "' line " +
                               std::to_string(lineno) + " has a bad label");
    }
    ex.text = line.substr(tab + 1);
    out.push_back(std::move(ex));
  }
  if (out.empty()) {
    throw std::runtime_error("load_probe_examples: '" + path + "' is empty");
  }
  return out;
}

ProbeTask make_probe_task(std::vector<ProbeExample> examples,
                          std::uint64_t seed, double val_fraction,
                          double test_fraction) {
  if (val_fraction <= 0.0 || test_fraction <= 0.0 ||
      val_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("make_probe_task: bad split fractions");
  }
  ProbeTask task;
  task.examples = std::move(examples);
  int max_label = -1;
  for (const auto& ex : task.examples) {
    if (ex.label < 0) {
      throw std::invalid_argument("make_probe_task: negative class id");
    }
    max_label = std::max(max_label, ex.label);
  }
  task.n_classes = static_cast<std::size_t>(max_label) + 1;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    by_class[task.examples[i].label].push_back(i);
  }
  Rng rng = Rng(seed).derive("probe_split");
  for (std::size_t c = 0; c < task.n_classes; ++c) {
    auto it = by_class.find(static_cast<int>(c));
    if (it == by_class.end() || it->second.size() < 3) {
      throw std::invalid_argument(
          "make_probe_task: class " + std::to_string(c) +
          " needs at least 3 examples so every split contains it");
    }
    auto& idx = it->second;
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(
               val_fraction * static_cast<double>(n) + 0.5)));
    const std::size_t n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(
               test_fraction * static_cast<double>(n) + 0.5)));
    if (n_val + n_test >= n) {
      throw std::invalid_argument("make_probe_task: class " +
                                  std::to_string(c) +
                                  " too small for the requested split");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_val) {
        task.val_idx.push_back(idx[i]);
      } else if (i < n_val + n_test) {
        task.test_idx.push_back(idx[i]);
      } else {
        task.train_idx.push_back(idx[i]);
      }
    }
  }
  std::sort(task.train_idx.begin(), task.train_idx.end());
  std::sort(task.val_idx.begin(), task.val_idx.end());
  std::sort(task.test_idx.begin(), task.test_idx.end());
  return task;
}

void SynonymTable::validate() const {
  for (const auto& [word, syns] : entries) {
    if (word.empty() || word.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("SynonymTable: '" + word +
                                  "' is not a single token");
    }
    if (syns.empty()) {
      throw std::invalid_argument("SynonymTable: '" + word +
                                  "' has no synonyms");
    }
    for (const auto& s : syns) {
      if (s == word) {
        throw std::invalid_argument("SynonymTable: '" + word +
                                    "' maps to itself");
      }
      if (s.empty() || s.find_first_of(" \t\n") != std::string::npos) {
        throw std::invalid_argument("SynonymTable: synonym '" + s +
                                    "' is not a single token");
      }
    }
  }
}

SynonymTable load_synonym_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_synonym_table: cannot open '" + path + "'");
  }
  SynonymTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("load_synonym_table: '" + path + "' line " +
                               std::to_string(lineno) + " has no tab");
    }
    const std::string word = line.substr(0, tab);
    std::vector<std::string> syns;
    std::stringstream rest(line.substr(tab + 1));
    std::string syn;
    while (std::getline(rest, syn, ',')) {
      if (!syn.empty()) syns.push_back(syn);
    }
    table.entries[word] = std::move(syns);
  }
  table.validate();
  return table;
}

void save_synonym_table(const SynonymTable& table, const std::string& path) {
  table.validate();
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_synonym_table: cannot open '" + path +
                             "'");
  }
  // Sorted for reproducible files.
  std::map<std::string, std::vector<std::string>> sorted(
      table.entries.begin(), table.entries.end());
  for (const auto& [word, syns] : sorted) {
    out << word << "\t";
    for (std::size_t i = 0; i < syns.size(); ++i) {
      if (i) out << ",";
      out << syns[i];
    }
    out << "\n";
  }
}

std::vector<ProbeExample> synonym_swap(const std::vector<ProbeExample>& dataset,
                                       const SynonymTable& table, Rng& rng,
                                       double swap_fraction) {
  if (swap_fraction < 0.0 || swap_fraction > 1.0) {
    throw std::invalid_argument(
        "synonym_swap: swap_fraction must be in [0, 1]");
  }
  std::vector<ProbeExample> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset) {
    ProbeExample t = ex;
    if (!table.empty()) {
      std::string rebuilt;
      bool changed = false;
      std::istringstream words(ex.text);
      std::string word;
      bool first = true;
      while (words >> word) {
        auto it = table.entries.find(word);
        if (it != table.entries.end() &&
            (swap_fraction >= 1.0 || rng.uniform() < swap_fraction)) {
          word = it->second[rng.uniform_int(it->second.size())];
          changed = true;
        }
        if (!first) rebuilt.push_back(' ');
        rebuilt += word;
        first = false;
      }
      if (changed) t.text = rebuilt;  // untouched examples stay verbatim
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace irlm
