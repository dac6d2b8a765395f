// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/training/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <span>

#include "m3s/errors.hpp"
#include "m3s/model/model.hpp"
#include "m3s/objectives/losses.hpp"

namespace m3s::training {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_tensor(std::string& out, const std::string& name, const ad::Shape& shape, std::span<const float> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) throw LoadError(source_ + ": truncated while reading " + what);
  }
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;
};

}  // namespace

ParamStore<float> expected_params(const ModelConfig& model) {
  ParamStore<float> store;
  Model<float>::init_params(model, store, 0);
  objectives::init_tco_params(model, store, 0);
  return store;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size()) {
    throw ContractViolation("save_checkpoint: optimizer state does not match parameters");
  }
  nlohmann::json header{{"format_version", kCheckpointVersion},
                        {"model", ck.model},
                        {"train", ck.train},
                        {"step", ck.step},
                        {"activation", ck.model.activation},
                        {"rng", ck.rng_state},
                        {"languages", ck.languages},
                        {"vocab", ck.vocab_words},
                        {"adam_step", ck.adam_step},
                        {"tensors", 3 * ck.params.size()}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto& entries = ck.params.entries();
  for (const auto& e : entries) put_tensor(out, e.name, e.tensor.shape(), e.tensor.data());
  for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(out, "adam.m/" + entries[i].name, entries[i].tensor.shape(), ck.adam_m[i]);
  for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(out, "adam.v/" + entries[i].name, entries[i].tensor.shape(), ck.adam_v[i]);

  // write-then-rename so an interrupted save never leaves a half file at `path`
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write checkpoint " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw LoadError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const std::string source = path.string();
  Reader in(bytes, source);
  if (in.str(4, "magic") != std::string(kCheckpointMagic, 4)) throw LoadError(source + ": not a checkpoint (bad magic)");
  if (const auto v = in.u32("version"); v != kCheckpointVersion) {
    throw LoadError(source + ": unsupported checkpoint version " + std::to_string(v));
  }
  const std::string text = in.str(in.u32("header length"), "header");

  Checkpoint ck;
  std::size_t tensor_count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.model = header.at("model").get<ModelConfig>();
    ck.train = header.at("train").get<TrainConfig>();
    ck.step = header.at("step").get<std::size_t>();
    ck.rng_state = header.at("rng").get<std::string>();
    ck.languages = header.at("languages").get<std::vector<std::string>>();
    ck.vocab_words = header.at("vocab").get<std::vector<std::string>>();
    ck.adam_step = header.at("adam_step").get<std::size_t>();
    tensor_count = header.at("tensors").get<std::size_t>();
    if (header.at("activation").get<std::string>() != ck.model.activation) {
      throw LoadError(source + ": header activation disagrees with model config");
    }
    ck.model.validate();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(source + ": corrupt header: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(source + ": corrupt header: " + e.what());
  }

  std::vector<RawTensor> raw;
  for (std::size_t t = 0; t < tensor_count; ++t) {
    const std::string where = "tensor #" + std::to_string(t);
    RawTensor r;
    r.name = in.str(in.u32(where + " name length"), where + " name");
    const std::uint32_t rank = in.u32(r.name + " rank");
    if (rank == 0 || rank > 8) throw LoadError(source + ": tensor '" + r.name + "' has invalid rank");
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(in.u32(r.name + " dims"));
      count *= r.shape.back();
    }
    if (count * 4 > bytes.size()) throw LoadError(source + ": tensor '" + r.name + "' is larger than the file");
    r.data.resize(count);
    for (auto& f : r.data) f = std::bit_cast<float>(in.u32(r.name + " data"));
    raw.push_back(std::move(r));
  }
  if (!in.done()) throw LoadError(source + ": trailing bytes after last tensor");

  const ParamStore<float> expected = expected_params(ck.model);
  const auto& want = expected.entries();
  if (raw.size() != 3 * want.size()) {
    throw LoadError(source + ": expected " + std::to_string(3 * want.size()) + " tensors, found " +
                    std::to_string(raw.size()));
  }
  for (std::size_t group = 0; group < 3; ++group) {
    const std::string prefix = group == 0 ? "" : group == 1 ? "adam.m/" : "adam.v/";
    for (std::size_t i = 0; i < want.size(); ++i) {
      const RawTensor& r = raw[group * want.size() + i];
      const std::string name = prefix + want[i].name;
      if (r.name != name) throw LoadError(source + ": tensor '" + r.name + "' found where '" + name + "' was expected");
      if (r.shape != want[i].tensor.shape()) {
        throw LoadError(source + ": tensor '" + r.name + "' has shape " + ad::to_string(r.shape) + ", config needs " +
                        ad::to_string(want[i].tensor.shape()));
      }
    }
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    ck.params.add(want[i].name, raw[i].shape, std::move(raw[i].data));
    ck.adam_m.push_back(std::move(raw[want.size() + i].data));
    ck.adam_v.push_back(std::move(raw[2 * want.size() + i].data));
  }
  return ck;
}

}  // namespace m3s::training
