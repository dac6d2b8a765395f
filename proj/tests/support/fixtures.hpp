// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

// Shared builders for the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "m3s/autodiff/tensor.hpp"
#include "m3s/data/batch.hpp"
#include "m3s/model/config.hpp"
#include "m3s/model/model.hpp"
#include "m3s/model/params.hpp"
#include "m3s/objectives/losses.hpp"

namespace m3s::testing {

// d=8, d_v=6, d_c=4, 2 heads, one layer per stack, V=16, M=5, N=4, n=2, m=2.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.d = 8;
  c.d_v = 6;
  c.d_c = 4;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.vis_layers = 1;
  c.text_heads = 2;
  c.vision_heads = 2;
  c.fusion_heads = 2;
  c.ffn_dim = 16;
  c.vision_ffn_dim = 8;
  c.vocab_size = 16;
  c.max_src_len = 5;
  c.max_tgt_len = 4;
  c.images = 2;
  c.regions = 2;
  c.languages = 2;
  return c;
}

template <typename T>
ParamStore<T> make_params(const ModelConfig& c, std::uint64_t seed, bool with_tco = true) {
  ParamStore<T> store;
  Model<T>::init_params(c, store, seed);
  if (with_tco) objectives::init_tco_params(c, store, seed + 1);
  return store;
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <typename T>
ad::Tensor<T> random_tensor(ad::Shape shape, std::uint64_t seed, bool parameter = false, double lo = -1.0,
                            double hi = 1.0) {
  const auto d = random_values(ad::numel(shape), seed, lo, hi);
  std::vector<T> v(d.begin(), d.end());
  return parameter ? ad::Tensor<T>::parameter(std::move(shape), std::move(v))
                   : ad::Tensor<T>::constant(std::move(shape), std::move(v));
}

/// Rows of the given real lengths, ids drawn from [first_id, vocab).
inline TokenBatch token_batch(const std::vector<std::size_t>& lengths, std::size_t vocab, std::uint64_t seed,
                              std::int32_t first_id = 4) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::int32_t>> rows;
  for (auto len : lengths) {
    std::vector<std::int32_t> row(len);
    for (auto& id : row) id = first_id + static_cast<std::int32_t>(rng() % (vocab - static_cast<std::size_t>(first_id)));
    rows.push_back(row);
  }
  return data::pad_rows(rows);
}

/// Random features and boxes for every slot; mask 1 everywhere unless given.
inline VisionBatch vision_batch(const ModelConfig& c, std::size_t batch, std::uint64_t seed,
                                std::vector<std::uint8_t> mask = {}) {
  VisionBatch v;
  v.batch = batch;
  v.images = c.images;
  v.regions = c.regions;
  v.dim = c.d_v;
  const auto f = random_values(batch * v.slots() * c.d_v, seed);
  v.features.assign(f.begin(), f.end());
  const auto b = random_values(batch * v.slots() * 4, seed + 1, 0.0, 1.0);
  v.boxes.assign(b.begin(), b.end());
  v.mask = mask.empty() ? std::vector<std::uint8_t>(batch * v.slots(), 1) : std::move(mask);
  return v;
}

/// Student/teacher batch over the micro model: same targets and vision,
/// different random sources, every other row one token shorter.
inline data::Batch micro_batch(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  data::Batch b;
  b.direction = {"xx", "yy"};
  std::vector<std::size_t> src_len, tgt_len;
  for (std::size_t i = 0; i < batch; ++i) {
    src_len.push_back(c.max_src_len - (i % 2));
    tgt_len.push_back(c.max_tgt_len - (i % 2));
  }
  b.src = token_batch(src_len, c.vocab_size, seed);
  b.aligned_src = token_batch(src_len, c.vocab_size, seed + 1);
  b.tgt = token_batch(tgt_len, c.vocab_size, seed + 2);
  b.decoder_in = b.tgt;
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t L = b.tgt.length;
    b.decoder_in.ids[r * L] = 1;
    for (std::size_t t = 1; t < L; ++t) {
      b.decoder_in.ids[r * L + t] = b.tgt.mask[r * L + t] ? b.tgt.ids[r * L + t - 1] : 0;
    }
  }
  b.vision = vision_batch(c, batch, seed + 3);
  for (std::size_t i = 0; i < batch; ++i) b.sample_ids.push_back("s" + std::to_string(i));
  return b;
}

}  // namespace m3s::testing
