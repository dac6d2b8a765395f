// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "m3s/data/vocab.hpp"

namespace m3s::data {

/// One line of a corpus file: an article in `lang` with its gold summary in
/// the same language and the URL-aligned versions of the article in other
/// languages. All versions of an article share one vision record.
struct CorpusRecord {
  std::string id;
  std::string url;
  std::string lang;
  std::string doc;
  std::string summary;
  std::map<std::string, std::string> aligned;  // lang -> doc
  std::string vision_ref;
};

void to_json(nlohmann::json& j, const CorpusRecord& r);
void from_json(const nlohmann::json& j, CorpusRecord& r);

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);

/// Tokenized CorpusRecord.
struct Sample {
  std::string id;
  std::string url;
  std::string lang;
  std::vector<std::int32_t> doc;
  std::vector<std::int32_t> summary;
  std::map<std::string, std::vector<std::int32_t>> aligned;
  std::string vision_ref;
};

std::vector<Sample> tokenize_corpus(const std::vector<CorpusRecord>& records, const Vocab& vocab);

/// Every text field in the corpus (docs, summaries, aligned docs), for build_vocab.
std::vector<std::string> corpus_texts(const std::vector<CorpusRecord>& records);

}  // namespace m3s::data
