// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace m3s::eval {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool empty_reference = false;  // recall undefined, reported as 0
};

struct RougeReport {
  RougeScore r1, r2, rl;
};

/// Clipped n-gram overlap over token ids.
RougeScore rouge_n(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference, std::size_t order);
/// Longest-common-subsequence based.
RougeScore rouge_l(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference);
RougeReport rouge(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference);

/// Harmonic mean, 0 when both are 0.
double f_measure(double precision, double recall);

std::size_t lcs_length(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// Drops everything from the first EOS on, plus PAD/BOS/language tags.
std::vector<std::int32_t> content_tokens(std::span<const std::int32_t> ids, std::size_t reserved);

}  // namespace m3s::eval
