// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "m3s/data/corpus.hpp"
#include "m3s/data/vision_io.hpp"
#include "m3s/data/vocab.hpp"
#include "m3s/model/config.hpp"
#include "m3s/model/model.hpp"

namespace m3s::data {

struct Direction {
  std::string src;
  std::string tgt;

  bool monolingual() const { return src == tgt; }
  std::string to_string() const { return src + "-" + tgt; }
  bool operator==(const Direction&) const = default;
};

/// "en-ru" -> {en, ru}
Direction parse_direction(const std::string& text);
std::vector<Direction> parse_directions(const std::string& comma_list);

/// src is the student input (doc in direction.src), aligned_src the teacher
/// input (doc in direction.tgt). Both start with the target-language tag.
struct Batch {
  Direction direction;
  std::vector<std::string> sample_ids;
  TokenBatch src;
  TokenBatch aligned_src;
  TokenBatch tgt;
  TokenBatch decoder_in;
  VisionBatch vision;
};

/// Samples must all be in direction.tgt. Sequences are head-truncated to the
/// configured maxima and padded to the longest row in the batch; vision is
/// truncated or zero-padded (mask 0) to the configured images x regions.
Batch make_batch(const std::vector<const Sample*>& samples, const Direction& direction, const Vocab& vocab,
                 const VisionStore& vision, const ModelConfig& config);

/// Source row only: [tag(tgt)] + doc, truncated to max_src_len.
std::vector<std::int32_t> source_ids(const std::vector<std::int32_t>& doc, const std::string& tgt_lang,
                                     const Vocab& vocab, std::size_t max_src_len);

TokenBatch pad_rows(const std::vector<std::vector<std::int32_t>>& rows);
VisionBatch vision_batch(const std::vector<const VisionRecord*>& records, const ModelConfig& config);

}  // namespace m3s::data
