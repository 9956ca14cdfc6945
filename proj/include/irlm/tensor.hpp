// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-dimensional tensors with reverse-mode automatic differentiation.
// Values are immutable once created except for grad buffers and explicit
// parameter updates between tapes; copies share storage. A Tape records the
// backward closure of every differentiable op executed while it is active
// (see TapeScope); replaying it in reverse accumulates gradients.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace irlm {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(shape_numel(impl_->shape), T(0));
    impl_->requires_grad = requires_grad;
  }

  static Tensor from_values(Shape shape, std::vector<T> values,
                            bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument("Tensor: " + shape_str(shape) +
                                  " does not hold " +
                                  std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_values({1}, {value}, requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& x : t.impl_->data) x = value;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  std::size_t rank() const { return check().shape.size(); }
  std::size_t size() const { return check().data.size(); }

  const T* data() const { return check().data.data(); }
  T* data() { return check().data.data(); }
  const std::vector<T>& values() const { return check().data; }

  T item() const {
    if (size() != 1) {
      throw std::invalid_argument("item: tensor with shape " +
                                  shape_str(shape()) + " is not a scalar");
    }
    return check().data[0];
  }

  bool requires_grad() const { return check().requires_grad; }
  void set_requires_grad(bool rg) { check().requires_grad = rg; }

  bool has_grad() const { return defined() && !impl_->grad.empty(); }

  /// Allocates a zeroed grad buffer if absent.
  void ensure_grad() {
    auto& im = check();
    if (im.grad.empty()) im.grad.assign(im.data.size(), T(0));
  }

  const T* grad() const {
    if (!has_grad()) throw std::runtime_error("grad: no gradient populated");
    return impl_->grad.data();
  }
  T* grad_data() {
    ensure_grad();
    return impl_->grad.data();
  }
  const std::vector<T>& grad_values() const {
    if (!has_grad()) throw std::runtime_error("grad: no gradient populated");
    return impl_->grad;
  }

  /// Zeroes the grad buffer in place (keeps the allocation); no-op if the
  /// buffer was never created.
  void zero_grad() {
    if (!defined()) return;
    for (auto& g : impl_->grad) g = T(0);
  }

  Tape<T>* tape() const { return defined() ? impl_->tape : nullptr; }
  void set_tape(Tape<T>* t) { check().tape = t; }

  /// Identity of the underlying storage (for aliasing checks in tests).
  const void* storage_id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty means absent
    bool requires_grad = false;
    Tape<T>* tape = nullptr;
  };

  Impl& check() {
    if (!impl_) throw std::runtime_error("Tensor: used before initialization");
    return *impl_;
  }
  const Impl& check() const {
    if (!impl_) throw std::runtime_error("Tensor: used before initialization");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of executed differentiable operations. Replaying in
/// reverse visits each recorded op exactly once; a tape can be replayed
/// once and must be cleared (or destroyed) to release the intermediates
/// captured by the closures.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void clear() {
    entries_.clear();
    consumed_ = false;
  }

  void replay_reverse() {
    if (consumed_) {
      throw std::runtime_error(
          "backward: tape already consumed; run a new forward pass first");
    }
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    consumed_ = true;
  }

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

namespace detail {
template <typename T>
inline Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
  return detail::active_tape_slot<T>();
}

/// Makes a tape current for the enclosing scope. Tapes are single-threaded.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape) : prev_(detail::active_tape_slot<T>()) {
    detail::active_tape_slot<T>() = tape;
  }
  ~TapeScope() { detail::active_tape_slot<T>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Disables recording for the enclosing scope (constant-target forwards).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : scope_(nullptr) {}

 private:
  TapeScope<T> scope_;
};

/// Reverse-mode sweep from a scalar loss. The loss must have been produced
/// while a tape was active; that tape is consumed by the call.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss has shape " +
                                shape_str(loss.shape()) + ", expected scalar");
  }
  Tape<T>* tape = loss.tape();
  if (tape == nullptr) {
    throw std::runtime_error(
        "backward: loss was not produced under an active tape");
  }
  loss.ensure_grad();
  loss.grad_data()[0] += T(1);
  tape->replay_reverse();
}

namespace detail {

/// Common op epilogue: if a tape is active and any input requires grad,
/// mark the output, pre-allocate its grad accumulator and record the
/// backward closure.
template <typename T, typename F>
void record_unary(const Tensor<T>& a, Tensor<T>& out, F&& fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape && a.requires_grad()) {
    out.set_requires_grad(true);
    out.set_tape(tape);
    out.ensure_grad();
    tape->record(std::forward<F>(fn));
  }
}

template <typename T, typename F>
void record_binary(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out,
                   F&& fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    out.set_tape(tape);
    out.ensure_grad();
    tape->record(std::forward<F>(fn));
  }
}

template <typename T, typename F>
void record_nary(const std::vector<Tensor<T>>& inputs, Tensor<T>& out, F&& fn) {
  Tape<T>* tape = active_tape<T>();
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    out.set_tape(tape);
    out.ensure_grad();
    tape->record(std::forward<F>(fn));
  }
}

}  // namespace detail

}  // namespace irlm
