// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/model/config.hpp"

#include "m3s/errors.hpp"

namespace m3s {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("model config: " + what);
}

}  // namespace

void ModelConfig::validate() const {
  require(d > 0 && d_v > 0 && d_c > 0, "hidden sizes must be positive");
  require(text_heads > 0 && d % text_heads == 0, "d must be divisible by text_heads");
  require(vision_heads > 0 && d_v % vision_heads == 0, "d_v must be divisible by vision_heads");
  require(fusion_heads > 0 && d_c % fusion_heads == 0, "d_c must be divisible by fusion_heads");
  require(enc_layers > 0 && dec_layers > 0 && vis_layers > 0, "layer counts must be positive");
  require(ffn_dim > 0 && vision_ffn_dim > 0, "ffn sizes must be positive");
  require(max_src_len >= 1 && max_tgt_len >= 1, "max_src_len and max_tgt_len must be >= 1");
  require(max_src_len >= max_tgt_len, "max_src_len must cover max_tgt_len (summaries go through the text encoder)");
  require(images >= 1 && regions >= 1, "images and regions must be >= 1");
  require(languages >= 2, "at least two languages are required");
  require(vocab_size > 4 + languages, "vocab_size must exceed the reserved ids");
  require(activation == "gelu_tanh", "unsupported activation '" + activation + "'");
  require(layer_order == "postnorm", "only postnorm layer order is supported");
  require(layer_norm_eps > 0, "layer_norm_eps must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"d_v", c.d_v},
                     {"d_c", c.d_c},
                     {"enc_layers", c.enc_layers},
                     {"dec_layers", c.dec_layers},
                     {"vis_layers", c.vis_layers},
                     {"text_heads", c.text_heads},
                     {"vision_heads", c.vision_heads},
                     {"fusion_heads", c.fusion_heads},
                     {"ffn_dim", c.ffn_dim},
                     {"vision_ffn_dim", c.vision_ffn_dim},
                     {"vocab_size", c.vocab_size},
                     {"max_src_len", c.max_src_len},
                     {"max_tgt_len", c.max_tgt_len},
                     {"images", c.images},
                     {"regions", c.regions},
                     {"languages", c.languages},
                     {"activation", c.activation},
                     {"layer_order", c.layer_order},
                     {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig defaults;
  c = defaults;
  for (const auto& [key, value] : j.items()) {
    if (key == "d") c.d = value.get<std::size_t>();
    else if (key == "d_v") c.d_v = value.get<std::size_t>();
    else if (key == "d_c") c.d_c = value.get<std::size_t>();
    else if (key == "enc_layers") c.enc_layers = value.get<std::size_t>();
    else if (key == "dec_layers") c.dec_layers = value.get<std::size_t>();
    else if (key == "vis_layers") c.vis_layers = value.get<std::size_t>();
    else if (key == "text_heads") c.text_heads = value.get<std::size_t>();
    else if (key == "vision_heads") c.vision_heads = value.get<std::size_t>();
    else if (key == "fusion_heads") c.fusion_heads = value.get<std::size_t>();
    else if (key == "ffn_dim") c.ffn_dim = value.get<std::size_t>();
    else if (key == "vision_ffn_dim") c.vision_ffn_dim = value.get<std::size_t>();
    else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
    else if (key == "max_src_len") c.max_src_len = value.get<std::size_t>();
    else if (key == "max_tgt_len") c.max_tgt_len = value.get<std::size_t>();
    else if (key == "images") c.images = value.get<std::size_t>();
    else if (key == "regions") c.regions = value.get<std::size_t>();
    else if (key == "languages") c.languages = value.get<std::size_t>();
    else if (key == "activation") c.activation = value.get<std::string>();
    else if (key == "layer_order") c.layer_order = value.get<std::string>();
    else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
    else throw ConfigError("model config: unknown key '" + key + "'");
  }
}

}  // namespace m3s
