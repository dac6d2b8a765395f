// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "m3s/autodiff/tensor.hpp"
#include "m3s/errors.hpp"

namespace m3s {

/// The single owner of all trainable tensors, in insertion order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Tensor<T> tensor;
  };

  ad::Tensor<T>& add(const std::string& name, ad::Shape shape, std::vector<T> values) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, ad::Tensor<T>::parameter(std::move(shape), std::move(values))});
    return entries_.back().tensor;
  }

  const ad::Tensor<T>& get(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return entries_[it->second].tensor;
  }
  ad::Tensor<T>& get(std::string_view name) {
    return const_cast<ad::Tensor<T>&>(static_cast<const ParamStore&>(*this).get(name));
  }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Deep copy with values converted to U (fresh leaves, no gradients).
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      std::vector<U> values(e.tensor.data().begin(), e.tensor.data().end());
      out.add(e.name, e.tensor.shape(), std::move(values));
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Seeded weight initialization.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  std::vector<T> xavier(std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<T> v(fan_in * fan_out);
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return v;
  }

  template <typename T>
  std::vector<T> normal(std::size_t count, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(count);
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return v;
  }

  template <typename T>
  static std::vector<T> filled(std::size_t count, T value) {
    return std::vector<T>(count, value);
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace m3s
