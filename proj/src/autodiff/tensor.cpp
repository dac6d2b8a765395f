// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/autodiff/tensor.hpp"

#include <sstream>

#include "m3s/errors.hpp"

namespace m3s::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

template <typename T>
std::shared_ptr<Node<T>> make_node(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.empty()) throw ConfigError("tensor shape must have at least one axis");
  for (auto extent : shape) {
    if (extent == 0) throw ConfigError("tensor extents must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw ConfigError("tensor shape " + to_string(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  return Tensor(make_node<T>(std::move(shape), std::move(values), false));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  return Tensor(make_node<T>(std::move(shape), std::move(values), true));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  std::vector<T> values(numel(shape), T(0));
  return Tensor(make_node<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->ensure_grad();
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ConfigError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ConfigError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ConfigError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw ConfigError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  loss.node().ensure_grad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace m3s::ad
