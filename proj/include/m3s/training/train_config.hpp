// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

namespace m3s::training {

struct TrainConfig {
  std::size_t batch = 8;         // B
  std::size_t max_steps = 2000;  // T
  std::size_t horizon = 1000;    // T1, annealing horizon of alpha
  double lr = 1e-3;
  std::size_t warmup = 100;
  double beta1 = 0.9;
  double beta2 = 0.998;
  double adam_eps = 1e-9;
  double smoothing = 0.1;
  double clip_norm = 0.0;  // 0 disables
  double beta = 1.0;       // TCO weight
  double tau = 0.1;
  std::string kd_mode = "cosine";
  std::optional<double> fixed_alpha;  // overrides the schedule (ablations)
  std::uint64_t seed = 1;
  std::size_t eval_interval = 100;
  std::string checkpoint_path;  // empty: no periodic checkpoints
  std::string metrics_path;     // empty: no metrics log

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Keys absent from j keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Linear warmup then inverse-sqrt decay: lr * min(s / w, sqrt(w / s)); 0 at s = 0.
double learning_rate(const TrainConfig& c, std::size_t s);

}  // namespace m3s::training
