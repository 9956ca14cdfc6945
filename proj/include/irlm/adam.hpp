// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam with decoupled weight decay, plus global-norm gradient clipping.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "irlm/tensor.hpp"

namespace irlm {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

/// First/second-moment buffers plus the step counter. The learning rate is
/// set per step by the schedule before each update.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState init(const NamedParams<T>& params, double lr,
                        double weight_decay) {
    AdamState s;
    s.learning_rate = lr;
    s.weight_decay = weight_decay;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& [name, p] : params) {
      (void)name;
      s.m.emplace_back(p.size(), T(0));
      s.v.emplace_back(p.size(), T(0));
    }
    return s;
  }
};

/// One bias-corrected update: p -= lr * mhat/(sqrt(vhat)+eps) + lr * wd * p.
/// Weight decay is decoupled from the moment estimates. Gradients are left
/// untouched; zero them separately between steps.
template <typename T>
void adam_step(NamedParams<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.m.size()) +
                                " parameters, got " +
                                std::to_string(params.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    if (!p.has_grad()) {
      throw std::runtime_error("adam_step: parameter '" + name +
                               "' has no gradient");
    }
    if (state.m[pi].size() != p.size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for '" +
                                  name + "'");
    }
    const T* g = p.grad();
    T* w = p.data();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T lr = static_cast<T>(state.learning_rate);
    const T wd = static_cast<T>(state.weight_decay);
    const T inv_bc1 = static_cast<T>(1.0 / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(state.eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] * inv_bc1;
      const T vhat = v[i] * inv_bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * w[i];
    }
  }
}

template <typename T>
void zero_grads(NamedParams<T>& params) {
  for (auto& [name, p] : params) {
    (void)name;
    p.zero_grad();
  }
}

/// Scales all gradients so their concatenated L2 norm is at most max_norm.
/// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(NamedParams<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    (void)name;
    if (!p.has_grad()) {
      throw std::runtime_error("clip_global_norm: parameter '" + name +
                               "' has no gradient");
    }
    const T* g = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& [name, p] : params) {
      (void)name;
      T* g = p.grad_data();
      for (std::size_t i = 0; i < p.size(); ++i) g[i] *= s;
    }
  }
  return norm;
}

}  // namespace irlm
