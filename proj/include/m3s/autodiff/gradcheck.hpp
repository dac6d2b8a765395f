// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "m3s/autodiff/tensor.hpp"

namespace m3s::ad {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t flagged = 0;  // entries above tolerance
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
  std::string summary() const;
};

struct NamedParam {
  std::string name;
  Tensor<double> tensor;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// exactly-zero gradients from turning round-off into unbounded ratios.
inline constexpr double kGradcheckScaleFloor = 1e-3;

/// Compares reverse-mode gradients of `fn` against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every entry of every parameter.
///
/// Only available in 64-bit. `fn` must build a scalar from the given
/// parameters and be deterministic; two evaluations that differ raise
/// ContractViolation. `eps` must lie in [1e-6, 1e-3].
GradcheckReport gradcheck(const std::function<Tensor<double>()>& fn, std::vector<NamedParam> params,
                          double eps = 1e-6, double tolerance = 1e-6);

}  // namespace m3s::ad
