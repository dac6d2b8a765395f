// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"

namespace m3s {

/// Dimensions of the gated text-vision transformer.
struct ModelConfig {
  std::size_t d = 32;        // text hidden size
  std::size_t d_v = 16;      // vision hidden size
  std::size_t d_c = 16;      // text-vision common size
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t vis_layers = 1;
  std::size_t text_heads = 2;
  std::size_t vision_heads = 2;
  std::size_t fusion_heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t vision_ffn_dim = 32;
  std::size_t vocab_size = 128;
  std::size_t max_src_len = 24;  // including the target-language tag
  std::size_t max_tgt_len = 8;   // including EOS
  std::size_t images = 2;        // n
  std::size_t regions = 4;       // m, per image
  std::size_t languages = 4;     // K
  std::string activation = "gelu_tanh";
  std::string layer_order = "postnorm";
  double layer_norm_eps = 1e-5;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace m3s
