// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace m3s::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;

  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Handle to a dense row-major tensor. Copies share the underlying node.
///
/// Leaves are created with `constant` or `parameter`; everything else comes
/// out of the operators in ops.hpp, which record their backward rule on the
/// thread's active Tape when any input requires a gradient.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor parameter(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(T value) { return constant({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }
  // Parameters only: optimizers and tests write through this.
  std::span<T> mutable_data() { return node_->value; }

  // Zero-filled view when nothing has been accumulated.
  std::span<const T> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Ordered log of backward closures for one forward pass.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<Backward> entries_;
};

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

/// Makes `tape` the recording target for the current thread until destroyed.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording (inference, finite differences).
template <typename T>
class NoTapeScope {
 public:
  NoTapeScope() : previous_(active_tape<T>()) { active_tape<T>() = nullptr; }
  ~NoTapeScope() { active_tape<T>() = previous_; }
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace m3s::ad
