// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "m3s/autodiff/tensor.hpp"
#include "m3s/model/config.hpp"
#include "m3s/model/params.hpp"

namespace m3s {

/// B padded token sequences, row-major [batch, length]. mask is 1 on real tokens.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  void validate(const char* what) const;
};

/// Region features for B articles: features [B, n, m, d_v], boxes [B, n, m, 4]
/// normalized to [0,1], mask [B, n, m]. image_ids / region_ids index the
/// learned order embeddings (default 0..n-1 and 0..m-1).
struct VisionBatch {
  std::size_t batch = 0;
  std::size_t images = 0;
  std::size_t regions = 0;
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<float> boxes;
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> image_ids;
  std::vector<std::int32_t> region_ids;

  std::size_t slots() const { return images * regions; }
};

template <typename T>
struct FusionOutput {
  ad::Tensor<T> cross_modal;   // [B, M, d_c]
  ad::Tensor<T> gate;          // [B, M, d_c], entries in (0,1)
  ad::Tensor<T> vision_gated;  // gate * cross_modal
  ad::Tensor<T> fused;         // [B, M, d]
};

template <typename T>
struct DecoderOutput {
  std::vector<ad::Tensor<T>> layers;  // [B, N, d] each, last one is the top
  ad::Tensor<T> logits;               // [B, N, V]

  const ad::Tensor<T>& top() const { return layers.back(); }
};

template <typename T>
struct ForwardTrace {
  ad::Tensor<T> text_states;    // [B, M, d]
  ad::Tensor<T> vision_states;  // [B, n*m, d_v]
  FusionOutput<T> fusion;
  DecoderOutput<T> decoder;
};

/// Textual encoder, visual encoder, gated text-vision fusion and decoder over
/// a borrowed parameter store. Post-norm throughout.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, const ParamStore<T>& params);

  static void init_params(const ModelConfig& config, ParamStore<T>& params, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParamStore<T>& params() const { return params_; }

  ad::Tensor<T> encode_text(const TokenBatch& tokens) const;
  ad::Tensor<T> encode_vision(const VisionBatch& vision) const;
  FusionOutput<T> fuse(const ad::Tensor<T>& text_states, const ad::Tensor<T>& vision_states,
                       std::span<const std::uint8_t> text_mask, std::span<const std::uint8_t> vision_mask) const;
  DecoderOutput<T> decode(const TokenBatch& decoder_in, const ad::Tensor<T>& fused,
                          std::span<const std::uint8_t> text_mask) const;
  ForwardTrace<T> forward(const TokenBatch& src, const VisionBatch& vision, const TokenBatch& decoder_in) const;
  // Reuses vision states already encoded (student and teacher passes share them).
  ForwardTrace<T> forward(const TokenBatch& src, const ad::Tensor<T>& vision_states,
                          std::span<const std::uint8_t> vision_mask, const TokenBatch& decoder_in) const;

  // [.., d] -> [.., V]
  ad::Tensor<T> output_logits(const ad::Tensor<T>& hidden) const;

 private:
  struct AttentionSpec {
    std::size_t heads;
    bool output_projection;
    bool causal;
  };

  ad::Tensor<T> attention(const std::string& prefix, const ad::Tensor<T>& query_in, const ad::Tensor<T>& key_in,
                          std::span<const std::uint8_t> query_mask, std::span<const std::uint8_t> key_mask,
                          const AttentionSpec& spec) const;
  ad::Tensor<T> linear(const std::string& prefix, const ad::Tensor<T>& x) const;
  ad::Tensor<T> ffn(const std::string& prefix, const ad::Tensor<T>& x) const;
  ad::Tensor<T> norm(const std::string& prefix, const ad::Tensor<T>& x) const;
  ad::Tensor<T> encoder_layer(const std::string& prefix, const ad::Tensor<T>& x, std::span<const std::uint8_t> mask,
                              std::size_t heads) const;

  ModelConfig config_;
  const ParamStore<T>& params_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace m3s
