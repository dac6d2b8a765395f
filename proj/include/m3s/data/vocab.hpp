// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace m3s::data {

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kEos = 2;
inline constexpr std::int32_t kUnk = 3;
inline constexpr std::int32_t kFirstLanguageTag = 4;

/// Token <-> id mapping. Ids 0..3 are PAD/BOS/EOS/UNK, the next K ids are
/// language tags (one per configured language, in order), then words.
class Vocab {
 public:
  Vocab() = default;
  Vocab(std::vector<std::string> languages, std::vector<std::string> words);

  std::size_t size() const { return reserved() + words_.size(); }
  std::size_t reserved() const { return static_cast<std::size_t>(kFirstLanguageTag) + languages_.size(); }

  std::int32_t id(std::string_view word) const;  // kUnk when absent
  std::string token(std::int32_t id) const;
  std::int32_t language_tag(std::string_view language) const;
  bool is_special(std::int32_t id) const { return id >= 0 && static_cast<std::size_t>(id) < reserved(); }

  const std::vector<std::string>& languages() const { return languages_; }
  const std::vector<std::string>& words() const { return words_; }

  /// One word per line; the language list is not part of the file.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path, std::vector<std::string> languages);

 private:
  std::vector<std::string> languages_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

std::vector<std::string> split_words(std::string_view text);

/// Frequency-ranked vocabulary (ties broken lexicographically) holding at most
/// `max_size` ids in total, reserved ids included.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size, std::vector<std::string> languages);

/// Lowercased whitespace split, unknown words -> UNK, EOS appended.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab);

/// Inverse of tokenize for in-vocabulary text: stops at EOS, skips PAD/BOS.
std::string detokenize(std::span<const std::int32_t> ids, const Vocab& vocab);

}  // namespace m3s::data
