// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/data/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "m3s/errors.hpp"

namespace m3s::data {

Vocab::Vocab(std::vector<std::string> languages, std::vector<std::string> words)
    : languages_(std::move(languages)), words_(std::move(words)) {
  if (languages_.size() < 2) throw ConfigError("vocab: at least two languages are required");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto [it, inserted] = index_.emplace(words_[i], static_cast<std::int32_t>(reserved() + i));
    if (!inserted) throw DataError("vocab: duplicate word '" + words_[i] + "'");
  }
}

std::int32_t Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocab::token(std::int32_t id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<s>";
    case kEos: return "</s>";
    case kUnk: return "<unk>";
    default: break;
  }
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw DataError("vocab: id " + std::to_string(id) + " out of range");
  }
  if (static_cast<std::size_t>(id) < reserved()) return "<2" + languages_[static_cast<std::size_t>(id - kFirstLanguageTag)] + ">";
  return words_[static_cast<std::size_t>(id) - reserved()];
}

std::int32_t Vocab::language_tag(std::string_view language) const {
  auto it = std::find(languages_.begin(), languages_.end(), language);
  if (it == languages_.end()) throw DataError("unknown language '" + std::string(language) + "'");
  return kFirstLanguageTag + static_cast<std::int32_t>(it - languages_.begin());
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file " + path.string());
  for (const auto& w : words_) out << w << '\n';
  if (!out) throw DataError("failed writing vocab file " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path, std::vector<std::string> languages) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocab file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) throw DataError("vocab file " + path.string() + " has an empty line");
    words.push_back(line);
  }
  return Vocab(std::move(languages), std::move(words));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size, std::vector<std::string> languages) {
  if (texts.empty()) throw DataError("build_vocab: empty corpus");
  const std::size_t reserved = static_cast<std::size_t>(kFirstLanguageTag) + languages.size();
  if (max_size < reserved) throw ConfigError("build_vocab: max_size is smaller than the reserved ids");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) ++counts[w];
  }
  if (counts.empty()) throw DataError("build_vocab: corpus contains no tokens");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - reserved);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
  return Vocab(std::move(languages), std::move(words));
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<std::int32_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  ids.push_back(kEos);
  return ids;
}

std::string detokenize(std::span<const std::int32_t> ids, const Vocab& vocab) {
  std::string out;
  for (auto id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

}  // namespace m3s::data
