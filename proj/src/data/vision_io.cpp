// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/data/vision_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "m3s/errors.hpp"

namespace m3s::data {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(source_ + ": truncated vision file");
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_vision_file(const std::filesystem::path& path, const std::vector<VisionRecord>& records) {
  std::string out(kVisionMagic, 4);
  put_u32(out, kVisionVersion);
  for (const auto& r : records) {
    const std::size_t slots = static_cast<std::size_t>(r.images) * r.regions;
    if (r.features.size() != slots * r.dim || r.boxes.size() != slots * 4 || r.mask.size() != slots) {
      throw DataError("vision record " + r.id + ": sizes do not match n/m/d_v");
    }
    put_u32(out, static_cast<std::uint32_t>(r.id.size()));
    out += r.id;
    put_u32(out, r.images);
    put_u32(out, r.regions);
    put_u32(out, r.dim);
    for (float f : r.features) put_f32(out, f);
    for (float f : r.boxes) put_f32(out, f);
    for (auto m : r.mask) out.push_back(static_cast<char>(m));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write vision file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("failed writing vision file " + path.string());
}

std::vector<VisionRecord> read_vision_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot read vision file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(bytes, path.string());
  if (in.str(4) != std::string(kVisionMagic, 4)) throw DataError(path.string() + ": bad vision file magic");
  if (const auto version = in.u32(); version != kVisionVersion) {
    throw DataError(path.string() + ": unsupported vision file version " + std::to_string(version));
  }
  std::vector<VisionRecord> records;
  while (!in.done()) {
    VisionRecord r;
    r.id = in.str(in.u32());
    r.images = in.u32();
    r.regions = in.u32();
    r.dim = in.u32();
    const std::size_t slots = static_cast<std::size_t>(r.images) * r.regions;
    r.features.resize(slots * r.dim);
    for (auto& f : r.features) f = in.f32();
    r.boxes.resize(slots * 4);
    for (auto& f : r.boxes) {
      f = in.f32();
      if (!std::isfinite(f) || f < 0.0f || f > 1.0f) throw DataError("vision record " + r.id + ": box outside [0,1]");
    }
    r.mask.resize(slots);
    for (auto& m : r.mask) m = in.u8();
    records.push_back(std::move(r));
  }
  return records;
}

VisionStore::VisionStore(std::vector<VisionRecord> records) {
  for (auto& r : records) {
    std::string id = r.id;
    if (!records_.emplace(std::move(id), std::move(r)).second) throw DataError("duplicate vision record id");
  }
}

const VisionRecord& VisionStore::get(const std::string& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw DataError("no vision record '" + id + "'");
  return it->second;
}

}  // namespace m3s::data
