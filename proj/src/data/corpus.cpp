// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/data/corpus.hpp"

#include <fstream>

#include "m3s/errors.hpp"

namespace m3s::data {

void to_json(nlohmann::json& j, const CorpusRecord& r) {
  j = nlohmann::json{{"id", r.id},           {"url", r.url},         {"lang", r.lang},
                     {"doc", r.doc},         {"summary", r.summary}, {"aligned", r.aligned},
                     {"vision_ref", r.vision_ref}};
}

void from_json(const nlohmann::json& j, CorpusRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.url = j.at("url").get<std::string>();
  r.lang = j.at("lang").get<std::string>();
  r.doc = j.at("doc").get<std::string>();
  r.summary = j.at("summary").get<std::string>();
  r.aligned = j.value("aligned", std::map<std::string, std::string>{});
  r.vision_ref = j.at("vision_ref").get<std::string>();
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<CorpusRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
  if (!out) throw DataError("failed writing corpus file " + path.string());
}

std::vector<Sample> tokenize_corpus(const std::vector<CorpusRecord>& records, const Vocab& vocab) {
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    vocab.language_tag(r.lang);
    Sample s;
    s.id = r.id;
    s.url = r.url;
    s.lang = r.lang;
    s.doc = tokenize(r.doc, vocab);
    s.summary = tokenize(r.summary, vocab);
    for (const auto& [lang, doc] : r.aligned) {
      vocab.language_tag(lang);
      if (lang == r.lang) throw DataError("sample " + r.id + ": aligned entry repeats its own language");
      s.aligned.emplace(lang, tokenize(doc, vocab));
    }
    s.vision_ref = r.vision_ref;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<std::string> corpus_texts(const std::vector<CorpusRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    texts.push_back(r.doc);
    texts.push_back(r.summary);
    for (const auto& [lang, doc] : r.aligned) texts.push_back(doc);
  }
  return texts;
}

}  // namespace m3s::data
