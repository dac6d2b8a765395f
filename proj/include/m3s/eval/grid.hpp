// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "m3s/data/batch.hpp"
#include "m3s/data/corpus.hpp"
#include "m3s/eval/beam.hpp"
#include "m3s/eval/rouge.hpp"

namespace m3s::eval {

/// Produces candidate content tokens (no EOS, no specials) for one sample read
/// in the given direction.
using Summarizer = std::function<std::vector<std::int32_t>(const data::Sample&, const data::Direction&)>;

struct GridCell {
  data::Direction direction;
  std::size_t count = 0;
  RougeReport mean;
};

struct GridResult {
  std::vector<GridCell> cells;  // in request order
  std::map<std::string, RougeReport> row_average;  // by source language

  const GridCell& cell(const data::Direction& d) const;
  /// Mean ROUGE-1 F1 over cells with src != tgt; 0 when there are none.
  double cross_lingual_r1() const;
  std::string table() const;
  std::vector<nlohmann::json> records() const;
};

RougeReport mean_report(const std::vector<RougeReport>& reports);

/// Test samples in each direction's target language are summarized from the
/// source-language version and scored against their gold summaries.
GridResult eval_grid(const std::vector<data::Sample>& test, const std::vector<data::Direction>& directions,
                     const Summarizer& summarize, std::size_t reserved_ids);

/// Beam (or greedy when beam_size is 1) generation with a trained model.
Summarizer model_summarizer(const Model<float>& model, const data::Vocab& vocab, const data::VisionStore& vision,
                            const BeamConfig& beam);

}  // namespace m3s::eval
