// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m3s/model/config.hpp"
#include "m3s/model/params.hpp"
#include "m3s/training/train_config.hpp"

namespace m3s::training {

inline constexpr char kCheckpointMagic[4] = {'M', '3', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training bitwise or to run inference.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::size_t step = 0;
  std::string rng_state;
  std::vector<std::string> languages;
  std::vector<std::string> vocab_words;
  ParamStore<float> params;
  std::size_t adam_step = 0;
  std::vector<std::vector<float>> adam_m;  // parallel to params
  std::vector<std::vector<float>> adam_v;
};

/// Parameters the checkpoint must hold for `model` (names, order and shapes).
ParamStore<float> expected_params(const ModelConfig& model);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
/// Validates magic, version, header and the full shape table before returning.
/// Throws LoadError naming the first offending tensor.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace m3s::training
