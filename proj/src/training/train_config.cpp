// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/training/train_config.hpp"

#include <cmath>

#include "m3s/errors.hpp"
#include "m3s/objectives/losses.hpp"

namespace m3s::training {

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train: batch must be positive");
  if (max_steps == 0) throw ConfigError("train: max_steps must be positive");
  if (horizon > max_steps) throw ConfigError("train: horizon T1 must not exceed max_steps T");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: Adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("train: smoothing must lie in [0,1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be non-negative");
  if (!(beta >= 0.0)) throw ConfigError("train: beta must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("train: tau must be positive");
  objectives::parse_kd_mode(kd_mode);
  if (fixed_alpha && !(*fixed_alpha >= 0.0 && *fixed_alpha <= 1.0)) throw ConfigError("train: fixed_alpha must lie in [0,1]");
  if (eval_interval == 0) throw ConfigError("train: eval_interval must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch", c.batch},
                     {"max_steps", c.max_steps},
                     {"horizon", c.horizon},
                     {"lr", c.lr},
                     {"warmup", c.warmup},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"smoothing", c.smoothing},
                     {"clip_norm", c.clip_norm},
                     {"beta", c.beta},
                     {"tau", c.tau},
                     {"kd_mode", c.kd_mode},
                     {"fixed_alpha", c.fixed_alpha ? nlohmann::json(*c.fixed_alpha) : nlohmann::json(nullptr)},
                     {"seed", c.seed},
                     {"eval_interval", c.eval_interval},
                     {"checkpoint_path", c.checkpoint_path},
                     {"metrics_path", c.metrics_path}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  nlohmann::json full;
  to_json(full, TrainConfig{});
  for (const auto& [k, v] : j.items()) {
    if (!full.contains(k)) throw ConfigError("train config: unknown key '" + k + "'");
    full[k] = v;
  }
  try {
    c.batch = full["batch"].get<std::size_t>();
    c.max_steps = full["max_steps"].get<std::size_t>();
    c.horizon = full["horizon"].get<std::size_t>();
    c.lr = full["lr"].get<double>();
    c.warmup = full["warmup"].get<std::size_t>();
    c.beta1 = full["beta1"].get<double>();
    c.beta2 = full["beta2"].get<double>();
    c.adam_eps = full["adam_eps"].get<double>();
    c.smoothing = full["smoothing"].get<double>();
    c.clip_norm = full["clip_norm"].get<double>();
    c.beta = full["beta"].get<double>();
    c.tau = full["tau"].get<double>();
    c.kd_mode = full["kd_mode"].get<std::string>();
    c.fixed_alpha = full["fixed_alpha"].is_null() ? std::nullopt : std::optional<double>(full["fixed_alpha"].get<double>());
    c.seed = full["seed"].get<std::uint64_t>();
    c.eval_interval = full["eval_interval"].get<std::size_t>();
    c.checkpoint_path = full["checkpoint_path"].get<std::string>();
    c.metrics_path = full["metrics_path"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

double learning_rate(const TrainConfig& c, std::size_t s) {
  if (s == 0) return 0.0;
  if (c.warmup == 0) return c.lr;
  const double ratio = static_cast<double>(s) / static_cast<double>(c.warmup);
  return c.lr * std::min(ratio, 1.0 / std::sqrt(ratio));
}

}  // namespace m3s::training
