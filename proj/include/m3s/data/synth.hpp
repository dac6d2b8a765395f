// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "m3s/data/corpus.hpp"
#include "m3s/data/vision_io.hpp"

namespace m3s::data {

/// Toy multilingual world. Every article exists in all languages; each
/// language spells latent word w as "<lang><perm_lang[w]>". The gold summary
/// is the lead sentence. Informative regions carry probe * bag(summary).
struct SynthConfig {
  std::uint64_t seed = 7;
  std::vector<std::string> languages{"en", "id", "ru", "ur"};
  std::size_t per_pair = 8;       // training articles, one sample per (article, lang)
  std::size_t test_per_pair = 0;  // held-out articles from the same world
  std::size_t latent_words = 24;
  std::size_t lead_min = 3;
  std::size_t lead_max = 6;
  std::size_t rest_min = 4;
  std::size_t rest_max = 10;
  std::size_t images = 2;
  std::size_t regions = 4;
  std::size_t d_v = 16;
  std::size_t informative_regions = 2;  // per image
  double noise = 0.1;
  double masked_image_rate = 0.25;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthCorpus {
  std::vector<CorpusRecord> train;
  std::vector<CorpusRecord> test;
  std::vector<VisionRecord> vision;
};

SynthCorpus synth_corpus(const SynthConfig& config);

struct SynthFiles {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path vision;
};

/// Writes train.jsonl, test.jsonl (if any) and vision.bin into dir.
SynthFiles write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace m3s::data
