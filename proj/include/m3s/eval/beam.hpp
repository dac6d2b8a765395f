// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "m3s/model/model.hpp"

namespace m3s::eval {

struct BeamConfig {
  std::size_t beam_size = 4;
  double length_penalty = 0.6;  // gamma
  std::size_t max_len = 0;      // 0: the model's max_tgt_len
  std::int32_t eos = 2;

  void validate() const;
};

void to_json(nlohmann::json& j, const BeamConfig& c);
void from_json(const nlohmann::json& j, BeamConfig& c);

/// ((5 + len) / 6)^gamma
double length_penalty(std::size_t length, double gamma);

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // generated ids, ending in EOS when finished
  double logprob = 0;
  double score = 0;  // logprob / length_penalty(tokens.size())
  bool finished = false;
};

/// Beam search for a single article (src and vision hold batch 1). Returns the
/// best finished hypothesis, else the best live one once max_len is reached.
/// PAD, BOS and language tags are never generated.
Hypothesis beam_search(const Model<float>& model, const TokenBatch& src, const VisionBatch& vision,
                       const BeamConfig& config, std::size_t reserved_ids);

/// Argmax decoding with the same token restrictions; ties go to the lower id.
Hypothesis greedy_decode(const Model<float>& model, const TokenBatch& src, const VisionBatch& vision,
                         std::size_t max_len, std::int32_t eos, std::size_t reserved_ids);

}  // namespace m3s::eval
