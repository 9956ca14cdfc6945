// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when a tape is active and an input requires grad, records a
// closure that accumulates gradients into its inputs. All loops are
// single-threaded and run in a fixed order so results are bit-reproducible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "irlm/rng.hpp"
#include "irlm/tensor.hpp"

namespace irlm {

namespace detail {

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Decomposition of a shape around one axis: element (o, k, i) of a line
// lives at flat offset (o * len + k) * inner + i.
struct AxisView {
  std::size_t outer, len, inner;
};

inline AxisView axis_view(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || static_cast<std::size_t>(axis) >= shape.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " +
                                std::to_string(axis) +
                                " invalid for shape " + shape_str(shape));
  }
  AxisView v{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size();
       ++i) {
    v.inner *= shape[i];
  }
  return v;
}

inline Shape shape_without_axis(const Shape& shape, int axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != static_cast<std::size_t>(axis)) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const T av = a[i * k + j];
      const T* brow = b + j * n;
      T* crow = c + i * n;
      for (std::size_t l = 0; l < n; ++l) crow[l] += av * brow[l];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t l = 0; l < n; ++l) {
      const T* brow = b + l * k;
      T acc = 0;
      for (std::size_t j = 0; j < k; ++j) acc += arow[j] * brow[j];
      c[i * n + l] += acc;
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t j = 0; j < k; ++j) {
    const T* arow = a + j * m;
    const T* brow = b + j * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t l = 0; l < n; ++l) crow[l] += av * brow[l];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  detail::record_binary(a, b, out, [a = a, b = b, out]() mutable {
    const T* g = out.grad();
    const std::size_t n = out.size();
    if (a.requires_grad()) {
      T* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_data();
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  detail::record_binary(a, b, out, [a = a, b = b, out]() mutable {
    const T* g = out.grad();
    const std::size_t n = out.size();
    if (a.requires_grad()) {
      T* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_data();
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
    }
  });
  return out;
}

/// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  detail::record_binary(a, b, out, [a = a, b = b, out]() mutable {
    const T* g = out.grad();
    const std::size_t n = out.size();
    if (a.requires_grad()) {
      T* ga = a.grad_data();
      const T* pb2 = b.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
    }
    if (b.requires_grad()) {
      T* gb = b.grad_data();
      const T* pa2 = a.data();
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
    }
  });
  return out;
}

/// Multiplication by a plain scalar constant (no grad into the factor).
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * factor;
  detail::record_unary(a, out, [a = a, out, factor]() mutable {
    const T* g = out.grad();
    T* ga = a.grad_data();
    for (std::size_t i = 0; i < out.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Standard matrix product a[m,k] * b[k,n]. Gradients accumulate to both
/// inputs on backward.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  detail::gemm_nn_acc(a.data(), b.data(), out.data(), m, k, n);
  detail::record_binary(a, b, out, [a = a, b = b, out, m, k, n]() mutable {
    const T* g = out.grad();
    if (a.requires_grad()) {
      detail::gemm_nt_acc(g, b.data(), a.grad_data(), m, n, k);
    }
    if (b.requires_grad()) {
      detail::gemm_tn_acc(a.data(), g, b.grad_data(), k, m, n);
    }
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: expected rank 2, got " +
                                shape_str(a.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n, m});
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  }
  detail::record_unary(a, out, [a = a, out, m, n]() mutable {
    const T* g = out.grad();
    T* ga = a.grad_data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    }
  });
  return out;
}

/// Broadcast-adds a row vector v[c] to every row of m[r,c].
template <typename T>
Tensor<T> add_rows(const Tensor<T>& mat, const Tensor<T>& v) {
  if (mat.rank() != 2 || v.rank() != 1 || mat.shape()[1] != v.shape()[0]) {
    throw std::invalid_argument("add_rows: incompatible shapes " +
                                shape_str(mat.shape()) + " vs " +
                                shape_str(v.shape()));
  }
  const std::size_t r = mat.shape()[0], c = mat.shape()[1];
  Tensor<T> out({r, c});
  const T* pm = mat.data();
  const T* pv = v.data();
  T* po = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) po[i * c + j] = pm[i * c + j] + pv[j];
  }
  detail::record_binary(mat, v, out, [mat = mat, v = v, out, r, c]() mutable {
    const T* g = out.grad();
    if (mat.requires_grad()) {
      T* gm = mat.grad_data();
      for (std::size_t i = 0; i < r * c; ++i) gm[i] += g[i];
    }
    if (v.requires_grad()) {
      T* gv = v.grad_data();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
      }
    }
  });
  return out;
}

/// Gathers rows of an embedding table; backward scatter-adds.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " +
                                shape_str(table.shape()));
  }
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(v) +
                                  ")");
    }
  }
  Tensor<T> out({ids.size(), d});
  const T* pt = table.data();
  T* po = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* row = pt + static_cast<std::size_t>(ids[i]) * d;
    std::copy(row, row + d, po + i * d);
  }
  detail::record_unary(table, out, [table = table, out, ids, d]() mutable {
    const T* g = out.grad();
    T* gt = table.grad_data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      T* row = gt + static_cast<std::size_t>(ids[i]) * d;
      const T* grow = g + i * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += grow[j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& rows) {
  if (a.rank() != 2) {
    throw std::invalid_argument("gather_rows: expected rank 2, got " +
                                shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  for (std::size_t r : rows) {
    if (r >= n) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(r) +
                                  " out of range [0, " + std::to_string(n) +
                                  ")");
    }
  }
  Tensor<T> out({rows.size(), d});
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(pa + rows[i] * d, pa + (rows[i] + 1) * d, po + i * d);
  }
  detail::record_unary(a, out, [a = a, out, rows, d]() mutable {
    const T* g = out.grad();
    T* ga = a.grad_data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      T* row = ga + rows[i] * d;
      const T* grow = g + i * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += grow[j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
  if (a.rank() != 2 || start + count > a.shape()[1]) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " +
                                std::to_string(start + count) +
                                ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor<T> out({n, count});
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pa + i * d + start, pa + i * d + start + count, po + i * count);
  }
  detail::record_unary(a, out, [a = a, out, start, count, n, d]() mutable {
    const T* g = out.grad();
    T* ga = a.grad_data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < count; ++j) {
        ga[i * d + start + j] += g[i * count + j];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no inputs");
  }
  const std::size_t n = parts[0].shape()[0];
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.shape()[0] != n) {
      throw std::invalid_argument("concat_cols: row mismatch, " +
                                  shape_str(parts[0].shape()) + " vs " +
                                  shape_str(p.shape()));
    }
    total += p.shape()[1];
  }
  Tensor<T> out({n, total});
  T* po = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.shape()[1];
    const T* pp = p.data();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(pp + i * c, pp + (i + 1) * c, po + i * total + offset);
    }
    offset += c;
  }
  detail::record_nary(parts, out, [parts = parts, out, n, total]() mutable {
    const T* g = out.grad();
    std::size_t offset = 0;
    for (auto& p : parts) {
      const std::size_t c = p.shape()[1];
      if (p.requires_grad()) {
        T* gp = p.grad_data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            gp[i * c + j] += g[i * total + offset + j];
          }
        }
      }
      offset += c;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> out({1});
  const T* pa = a.data();
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
  out.data()[0] = acc;
  detail::record_unary(a, out, [a = a, out]() mutable {
    const T g = out.grad()[0];
    T* ga = a.grad_data();
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

/// Sums along one axis; the axis is removed from the output shape.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis) {
  const auto v = detail::axis_view(a.shape(), axis, "sum_axis");
  Tensor<T> out(detail::shape_without_axis(a.shape(), axis));
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      T acc = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        acc += pa[(o * v.len + k) * v.inner + i];
      }
      po[o * v.inner + i] = acc;
    }
  }
  detail::record_unary(a, out, [a = a, out, v]() mutable {
    const T* g = out.grad();
    T* ga = a.grad_data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const T gv = g[o * v.inner + i];
        for (std::size_t k = 0; k < v.len; ++k) {
          ga[(o * v.len + k) * v.inner + i] += gv;
        }
      }
    }
  });
  return out;
}

/// Numerically stabilized softmax along the given axis: outputs are positive
/// and each line sums to 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  const auto v = detail::axis_view(a.shape(), axis, "softmax");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const auto at = [&](std::size_t k) { return (o * v.len + k) * v.inner + i; };
      T mx = pa[at(0)];
      for (std::size_t k = 1; k < v.len; ++k) mx = std::max(mx, pa[at(k)]);
      T sum = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const T e = std::exp(pa[at(k)] - mx);
        po[at(k)] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::size_t k = 0; k < v.len; ++k) po[at(k)] *= inv;
    }
  }
  detail::record_unary(a, out, [a = a, out, v]() mutable {
    const T* g = out.grad();
    const T* y = out.data();
    T* ga = a.grad_data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const auto at = [&](std::size_t k) {
          return (o * v.len + k) * v.inner + i;
        };
        T dot = 0;
        for (std::size_t k = 0; k < v.len; ++k) dot += g[at(k)] * y[at(k)];
        for (std::size_t k = 0; k < v.len; ++k) {
          ga[at(k)] += y[at(k)] * (g[at(k)] - dot);
        }
      }
    }
  });
  return out;
}

/// Per-slice Kullback-Leibler divergence sum p*log(p/q) along an axis. Both
/// inputs must be row-stochastic along that axis; both are floored at eps
/// before the logarithm. Output shape drops the axis.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p, const Tensor<T>& q, int axis,
                        T eps = T(1e-8)) {
  detail::check_same_shape("kl_divergence", p, q);
  const auto v = detail::axis_view(p.shape(), axis, "kl_divergence");
  // Single precision carries more rounding in the softmax sums, so the
  // stochasticity check is looser there.
  const T tol = std::is_same_v<T, double> ? T(1e-6) : T(1e-4);
  const T* pp = p.data();
  const T* pq = q.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      T sp = 0, sq = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        sp += pp[(o * v.len + k) * v.inner + i];
        sq += pq[(o * v.len + k) * v.inner + i];
      }
      if (std::abs(sp - T(1)) > tol || std::abs(sq - T(1)) > tol) {
        throw std::domain_error(
            "kl_divergence: input not row-stochastic along axis " +
            std::to_string(axis) + " (slice sums " + std::to_string(sp) +
            ", " + std::to_string(sq) + ")");
      }
    }
  }
  Tensor<T> out(detail::shape_without_axis(p.shape(), axis));
  T* po = out.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      T acc = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const std::size_t idx = (o * v.len + k) * v.inner + i;
        const T pc = std::max(pp[idx], eps);
        const T qc = std::max(pq[idx], eps);
        acc += pp[idx] * (std::log(pc) - std::log(qc));
      }
      po[o * v.inner + i] = acc;
    }
  }
  detail::record_binary(p, q, out, [p = p, q = q, out, v, eps]() mutable {
    const T* g = out.grad();
    const T* pp2 = p.data();
    const T* pq2 = q.data();
    T* gp = p.requires_grad() ? p.grad_data() : nullptr;
    T* gq = q.requires_grad() ? q.grad_data() : nullptr;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const T gv = g[o * v.inner + i];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t idx = (o * v.len + k) * v.inner + i;
          const T pc = std::max(pp2[idx], eps);
          const T qc = std::max(pq2[idx], eps);
          if (gp) {
            const T dlog = pp2[idx] > eps ? T(1) : T(0);
            gp[idx] += gv * (std::log(pc) - std::log(qc) + dlog);
          }
          if (gq) {
            gq[idx] += gv * (pq2[idx] > eps ? -pp2[idx] / qc : T(0));
          }
        }
      }
    }
  });
  return out;
}

/// Per-row layer normalization with affine gain/bias. x is [n,d]; gain and
/// bias are [d]. Variance uses an epsilon in the denominator, so
/// zero-variance rows map to zero (times gain, plus bias).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias) {
  constexpr T kEps = T(1e-5);
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.shape()[0] != x.shape()[1] || bias.shape()[0] != x.shape()[1]) {
    throw std::invalid_argument("layer_norm: incompatible shapes " +
                                shape_str(x.shape()) + ", " +
                                shape_str(gain.shape()) + ", " +
                                shape_str(bias.shape()));
  }
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor<T> out({n, d});
  // Normalized values and inverse stddevs are captured for backward.
  auto xhat = std::make_shared<std::vector<T>>(n * d);
  auto inv_std = std::make_shared<std::vector<T>>(n);
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = px + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + kEps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (row[j] - mean) * is;
      (*xhat)[i * d + j] = xh;
      po[i * d + j] = xh * pg[j] + pb[j];
    }
  }
  std::vector<Tensor<T>> inputs{x, gain, bias};
  detail::record_nary(inputs, out,
                      [x = x, gain = gain, bias = bias, out, xhat, inv_std, n, d]() mutable {
    const T* g = out.grad();
    const T* pg2 = gain.data();
    for (std::size_t i = 0; i < n; ++i) {
      const T* grow = g + i * d;
      const T* xh = xhat->data() + i * d;
      if (gain.requires_grad()) {
        T* gg = gain.grad_data();
        for (std::size_t j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
      }
      if (bias.requires_grad()) {
        T* gb = bias.grad_data();
        for (std::size_t j = 0; j < d; ++j) gb[j] += grow[j];
      }
      if (x.requires_grad()) {
        // d/dx of (x - mean)/sqrt(var + eps) * gain, standard two-pass form.
        const T is = (*inv_std)[i];
        T sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T dxh = grow[j] * pg2[j];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xh[j];
        }
        T* gx = x.grad_data() + i * d;
        const T inv_d = T(1) / static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const T dxh = grow[j] * pg2[j];
          gx[j] += is * (dxh - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
        }
      }
    }
  });
  return out;
}

/// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.7071067811865475244);
  constexpr T kInvSqrt2Pi = T(0.3989422804014326779);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    po[i] = T(0.5) * px[i] * (T(1) + std::erf(px[i] * kInvSqrt2));
  }
  detail::record_unary(x, out, [x = x, out]() mutable {
    const T* g = out.grad();
    const T* px2 = x.data();
    T* gx = x.grad_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(px2[i] * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * px2[i] * px2[i]);
      gx[i] += g[i] * (cdf + px2[i] * pdf);
    }
  });
  return out;
}

/// Inverted dropout: keeps an element with probability 1-rate and scales it
/// by 1/(1-rate). rate <= 0 is a pass-through that consumes no RNG draws.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be < 1");
  }
  auto mask = std::make_shared<std::vector<T>>(x.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : T(0);
  }
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] * (*mask)[i];
  detail::record_unary(x, out, [x = x, out, mask]() mutable {
    const T* g = out.grad();
    T* gx = x.grad_data();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
  return out;
}

/// Negative mean log-likelihood over the selected positions of logits[n,V]:
/// -(1/m) * sum over selected k of log softmax(logits_k)[targets_k].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<std::uint8_t>& mask) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be rank 2, got " +
                                shape_str(logits.shape()));
  }
  const std::size_t n = logits.shape()[0], vocab = logits.shape()[1];
  if (targets.size() != n || mask.size() != n) {
    throw std::invalid_argument(
        "cross_entropy: targets/mask length must equal row count " +
        std::to_string(n));
  }
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    ++m;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw std::invalid_argument("cross_entropy: target " +
                                  std::to_string(targets[i]) +
                                  " out of range [0, " +
                                  std::to_string(vocab) + ")");
    }
  }
  if (m == 0) {
    throw std::domain_error(
        "cross_entropy: empty mask, loss undefined for zero positions");
  }
  // Softmax rows at selected positions are captured for backward.
  auto probs = std::make_shared<std::vector<T>>();
  auto sel = std::make_shared<std::vector<std::size_t>>();
  probs->reserve(m * vocab);
  sel->reserve(m);
  const T* pl = logits.data();
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const T* row = pl + i * vocab;
    T mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    const std::size_t base = probs->size();
    for (std::size_t j = 0; j < vocab; ++j) {
      const T e = std::exp(row[j] - mx);
      probs->push_back(e);
      sum += e;
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < vocab; ++j) (*probs)[base + j] *= inv;
    loss += mx + std::log(sum) - row[static_cast<std::size_t>(targets[i])];
    sel->push_back(i);
  }
  loss /= static_cast<T>(m);
  Tensor<T> out = Tensor<T>::scalar(loss);
  detail::record_unary(logits, out,
                       [logits = logits, out, probs, sel, targets, vocab, m]() mutable {
    const T g = out.grad()[0] / static_cast<T>(m);
    T* gl = logits.grad_data();
    for (std::size_t s = 0; s < sel->size(); ++s) {
      const std::size_t i = (*sel)[s];
      const T* prow = probs->data() + s * vocab;
      T* grow = gl + i * vocab;
      for (std::size_t j = 0; j < vocab; ++j) grow[j] += g * prow[j];
      grow[static_cast<std::size_t>(targets[i])] -= g;
    }
  });
  return out;
}

}  // namespace irlm
