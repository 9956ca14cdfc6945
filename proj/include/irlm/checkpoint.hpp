// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format:
//   8-byte magic "IRLM0001", u32 format version, ModelConfig fields,
//   u32 parameter count, then per parameter: u32 name length, name bytes,
//   u8 dtype code (1 = float32, 2 = float64), u8 rank, u64 extents, raw
//   little-endian values. When saved mid-training an AdamState section
//   follows: u64 step, five f64 hyperparameters, then per-parameter first
//   and second moment buffers in parameter order.
//
// Values are written in host byte order; this targets little-endian
// machines. A temp-file-plus-rename keeps the last checkpoint valid if a
// save is interrupted.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "irlm/adam.hpp"
#include "irlm/model.hpp"

namespace irlm {

inline constexpr char kCheckpointMagic[8] = {'I', 'R', 'L', 'M',
                                             '0', '0', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "checkpoints support float32 and float64");
  return std::is_same_v<T, float> ? 1 : 2;
}

namespace detail {

template <typename P>
void write_pod(std::ostream& out, const P& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(P));
}

template <typename P>
P read_pod(std::istream& in, const std::string& path) {
  P value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(P));
  if (!in) {
    throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  }
  return value;
}

template <typename T>
void write_raw(std::ostream& out, const T* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_raw(std::istream& in, T* data, std::size_t n,
              const std::string& path) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) {
    throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  }
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model,
                     const AdamState<T>* adam = nullptr) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw std::runtime_error("save_checkpoint: cannot open '" + tmp + "'");
    }
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(out, kCheckpointVersion);
    const auto& c = model.config;
    detail::write_pod(out, static_cast<std::uint32_t>(c.n_layers));
    detail::write_pod(out, static_cast<std::uint32_t>(c.n_heads));
    detail::write_pod(out, static_cast<std::uint32_t>(c.d_model));
    detail::write_pod(out, static_cast<std::uint32_t>(c.d_ff));
    detail::write_pod(out, static_cast<std::uint32_t>(c.vocab_size));
    detail::write_pod(out, static_cast<std::uint32_t>(c.max_len));
    detail::write_pod(out, c.dropout_rate);
    detail::write_pod(out, c.seed);

    const NamedParams<T> params = model.parameters();
    detail::write_pod(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
      detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod(out, dtype_code<T>());
      detail::write_pod(out, static_cast<std::uint8_t>(p.rank()));
      for (std::size_t e : p.shape()) {
        detail::write_pod(out, static_cast<std::uint64_t>(e));
      }
      detail::write_raw(out, p.data(), p.size());
    }

    detail::write_pod(out, static_cast<std::uint8_t>(adam ? 1 : 0));
    if (adam) {
      detail::write_pod(out, adam->step);
      detail::write_pod(out, adam->beta1);
      detail::write_pod(out, adam->beta2);
      detail::write_pod(out, adam->eps);
      detail::write_pod(out, adam->learning_rate);
      detail::write_pod(out, adam->weight_decay);
      for (std::size_t i = 0; i < params.size(); ++i) {
        detail::write_raw(out, adam->m[i].data(), adam->m[i].size());
        detail::write_raw(out, adam->v[i].data(), adam->v[i].size());
      }
    }
    if (!out) {
      throw std::runtime_error("save_checkpoint: write error on '" + tmp +
                               "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

/// Reads the dtype code of the first parameter (for runtime precision
/// dispatch) without loading the model.
inline std::uint8_t peek_checkpoint_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  }
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  detail::read_pod<std::uint32_t>(in, path);  // version
  for (int i = 0; i < 6; ++i) detail::read_pod<std::uint32_t>(in, path);
  detail::read_pod<double>(in, path);
  detail::read_pod<std::uint64_t>(in, path);
  detail::read_pod<std::uint32_t>(in, path);  // param count
  const auto name_len = detail::read_pod<std::uint32_t>(in, path);
  in.seekg(name_len, std::ios::cur);
  return detail::read_pod<std::uint8_t>(in, path);
}

/// Loads a checkpoint. When adam is non-null and the file carries optimizer
/// state it is restored; *has_adam reports whether the section was present.
template <typename T>
Model<T> load_checkpoint(const std::string& path, AdamState<T>* adam = nullptr,
                         bool* has_adam = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  }
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in '" + path + "'");
  }
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version) + " in '" + path + "'");
  }
  ModelConfig cfg;
  cfg.n_layers = detail::read_pod<std::uint32_t>(in, path);
  cfg.n_heads = detail::read_pod<std::uint32_t>(in, path);
  cfg.d_model = detail::read_pod<std::uint32_t>(in, path);
  cfg.d_ff = detail::read_pod<std::uint32_t>(in, path);
  cfg.vocab_size = detail::read_pod<std::uint32_t>(in, path);
  cfg.max_len = detail::read_pod<std::uint32_t>(in, path);
  cfg.dropout_rate = detail::read_pod<double>(in, path);
  cfg.seed = detail::read_pod<std::uint64_t>(in, path);

  Rng scratch(cfg.seed);
  Model<T> model = init_model<T>(cfg, scratch);  // every value overwritten
  NamedParams<T> params = model.parameters();

  const auto count = detail::read_pod<std::uint32_t>(in, path);
  if (count != params.size()) {
    throw std::runtime_error("load_checkpoint: '" + path + "' holds " +
                             std::to_string(count) + " parameters, expected " +
                             std::to_string(params.size()));
  }
  for (auto& [name, p] : params) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, path);
    std::string file_name(name_len, '\0');
    in.read(file_name.data(), name_len);
    if (!in || file_name != name) {
      throw std::runtime_error("load_checkpoint: expected parameter '" + name +
                               "', found '" + file_name + "' in '" + path +
                               "'");
    }
    const auto code = detail::read_pod<std::uint8_t>(in, path);
    if (code != dtype_code<T>()) {
      throw std::runtime_error(
          "load_checkpoint: dtype code " + std::to_string(code) + " in '" +
          path + "' does not match requested precision");
    }
    const auto rank = detail::read_pod<std::uint8_t>(in, path);
    if (rank != p.rank()) {
      throw std::runtime_error("load_checkpoint: rank mismatch for '" + name +
                               "'");
    }
    for (std::size_t e : p.shape()) {
      const auto extent = detail::read_pod<std::uint64_t>(in, path);
      if (extent != e) {
        throw std::runtime_error("load_checkpoint: extent mismatch for '" +
                                 name + "'");
      }
    }
    detail::read_raw(in, p.data(), p.size(), path);
  }

  const auto adam_flag = detail::read_pod<std::uint8_t>(in, path);
  if (has_adam) *has_adam = adam_flag != 0;
  if (adam_flag && adam) {
    adam->step = detail::read_pod<std::uint64_t>(in, path);
    adam->beta1 = detail::read_pod<double>(in, path);
    adam->beta2 = detail::read_pod<double>(in, path);
    adam->eps = detail::read_pod<double>(in, path);
    adam->learning_rate = detail::read_pod<double>(in, path);
    adam->weight_decay = detail::read_pod<double>(in, path);
    adam->m.assign(params.size(), {});
    adam->v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam->m[i].assign(params[i].second.size(), T(0));
      adam->v[i].assign(params[i].second.size(), T(0));
      detail::read_raw(in, adam->m[i].data(), adam->m[i].size(), path);
      detail::read_raw(in, adam->v[i].data(), adam->v[i].size(), path);
    }
  }
  return model;
}

}  // namespace irlm
