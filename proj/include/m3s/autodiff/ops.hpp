// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "m3s/autodiff/tensor.hpp"

// Differentiable operators over m3s::ad::Tensor.
//
// Broadcasting is limited to a right operand whose shape is a suffix of the
// left operand's shape (bias vectors, per-position tables). Every operator
// validates shapes up front (ConfigError) and rejects non-finite outputs
// (NumericError naming the operator).
namespace m3s::ad {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);

// a: [..., M, K]; b: [K, N] or [..., K, N] (or [..., N, K] with transpose_b).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order);
// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& sizes);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t length);

template <typename T> Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& a, std::size_t axis);

template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
// tanh approximation.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

// Normalizes over the last axis; gamma/beta have the last axis' extent.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

// table: [V, D]; returns `prefix` + [D]. Out-of-range ids raise DataError.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids, Shape prefix);

// mask has a's element count; entries with mask != 0 become `value` and pass no gradient.
template <typename T> Tensor<T> masked_fill(const Tensor<T>& a, std::span<const std::uint8_t> mask, T value);

template <typename T> Tensor<T> sum(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> mean(const Tensor<T>& a, std::size_t axis);
template <typename T> Tensor<T> sum_all(const Tensor<T>& a);
template <typename T> Tensor<T> mean_all(const Tensor<T>& a);

// Row-wise over the last axis. Zero-norm rows raise NumericError.
template <typename T> Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> l2_normalize(const Tensor<T>& a);

// a viewed as [R, D] with D the last extent; returns [rows.size(), D].
template <typename T> Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows);
// a: [R, V]; returns [R] with a[r, index[r]].
template <typename T> Tensor<T> pick(const Tensor<T>& a, std::span<const std::int32_t> index);

// Same values, no gradient path.
template <typename T> Tensor<T> detach(const Tensor<T>& a);

}  // namespace m3s::ad
