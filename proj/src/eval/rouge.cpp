// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/eval/rouge.hpp"

#include <algorithm>
#include <map>

#include "m3s/data/vocab.hpp"
#include "m3s/errors.hpp"

namespace m3s::eval {
namespace {

std::map<std::vector<std::int32_t>, std::size_t> ngrams(std::span<const std::int32_t> seq, std::size_t n) {
  std::map<std::vector<std::int32_t>, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<std::int32_t>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

RougeScore score(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  RougeScore s;
  s.empty_reference = ref_total == 0;
  s.precision = cand_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(cand_total);
  s.recall = ref_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(ref_total);
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

}  // namespace

double f_measure(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

RougeScore rouge_n(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference, std::size_t order) {
  if (order == 0) throw ConfigError("rouge_n: order must be positive");
  const auto cand = ngrams(candidate, order);
  const auto ref = ngrams(reference, order);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  const std::size_t cand_total = candidate.size() >= order ? candidate.size() - order + 1 : 0;
  const std::size_t ref_total = reference.size() >= order ? reference.size() - order + 1 : 0;
  return score(overlap, cand_total, ref_total);
}

std::size_t lcs_length(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference) {
  return score(lcs_length(candidate, reference), candidate.size(), reference.size());
}

RougeReport rouge(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference)};
}

std::vector<std::int32_t> content_tokens(std::span<const std::int32_t> ids, std::size_t reserved) {
  std::vector<std::int32_t> out;
  for (auto id : ids) {
    if (id == data::kEos) break;
    if (id == data::kUnk || id < 0 || static_cast<std::size_t>(id) >= reserved) out.push_back(id);
  }
  return out;
}

}  // namespace m3s::eval
