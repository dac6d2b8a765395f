// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace m3s::data {

/// Packed region features of one article: n images x m regions x d_v.
struct VisionRecord {
  std::string id;
  std::uint32_t images = 0;
  std::uint32_t regions = 0;
  std::uint32_t dim = 0;
  std::vector<float> features;     // n*m*d_v
  std::vector<float> boxes;        // n*m*4, each in [0,1]
  std::vector<std::uint8_t> mask;  // n*m

  bool operator==(const VisionRecord&) const = default;
};

inline constexpr char kVisionMagic[4] = {'M', '3', 'S', 'V'};
inline constexpr std::uint32_t kVisionVersion = 1;

/// Little-endian: magic, version, then per record id/n/m/d_v/features/boxes/mask.
void write_vision_file(const std::filesystem::path& path, const std::vector<VisionRecord>& records);
std::vector<VisionRecord> read_vision_file(const std::filesystem::path& path);

class VisionStore {
 public:
  VisionStore() = default;
  explicit VisionStore(std::vector<VisionRecord> records);

  const VisionRecord& get(const std::string& id) const;
  bool contains(const std::string& id) const { return records_.count(id) != 0; }
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::string, VisionRecord> records_;
};

}  // namespace m3s::data
