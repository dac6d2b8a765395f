// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/data/batch.hpp"

#include <algorithm>
#include <sstream>

#include "m3s/errors.hpp"

namespace m3s::data {

Direction parse_direction(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 == text.size() || text.find('-', dash + 1) != std::string::npos) {
    throw ConfigError("bad direction '" + text + "', expected src-tgt such as en-ru");
  }
  return {text.substr(0, dash), text.substr(dash + 1)};
}

std::vector<Direction> parse_directions(const std::string& comma_list) {
  std::vector<Direction> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_direction(item));
  }
  if (out.empty()) throw ConfigError("no directions given");
  return out;
}

std::vector<std::int32_t> source_ids(const std::vector<std::int32_t>& doc, const std::string& tgt_lang,
                                     const Vocab& vocab, std::size_t max_src_len) {
  std::vector<std::int32_t> row{vocab.language_tag(tgt_lang)};
  const std::size_t keep = std::min(doc.size(), max_src_len - 1);
  row.insert(row.end(), doc.begin(), doc.begin() + static_cast<std::ptrdiff_t>(keep));
  return row;
}

TokenBatch pad_rows(const std::vector<std::vector<std::int32_t>>& rows) {
  TokenBatch out;
  out.batch = rows.size();
  for (const auto& r : rows) out.length = std::max(out.length, r.size());
  out.ids.assign(out.batch * out.length, kPad);
  out.mask.assign(out.batch * out.length, 0);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t t = 0; t < rows[b].size(); ++t) {
      out.ids[b * out.length + t] = rows[b][t];
      out.mask[b * out.length + t] = 1;
    }
  }
  return out;
}

VisionBatch vision_batch(const std::vector<const VisionRecord*>& records, const ModelConfig& config) {
  VisionBatch v;
  v.batch = records.size();
  v.images = config.images;
  v.regions = config.regions;
  v.dim = config.d_v;
  const std::size_t slots = v.slots();
  v.features.assign(v.batch * slots * v.dim, 0.0f);
  v.boxes.assign(v.batch * slots * 4, 0.0f);
  v.mask.assign(v.batch * slots, 0);
  for (std::size_t b = 0; b < records.size(); ++b) {
    const VisionRecord& r = *records[b];
    if (r.dim != config.d_v) {
      throw DataError("vision record " + r.id + ": d_v " + std::to_string(r.dim) + " does not match model d_v " +
                      std::to_string(config.d_v));
    }
    const std::size_t n = std::min<std::size_t>(r.images, v.images);
    const std::size_t m = std::min<std::size_t>(r.regions, v.regions);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t src = i * r.regions + j;
        const std::size_t dst = b * slots + i * v.regions + j;
        std::copy_n(r.features.begin() + static_cast<std::ptrdiff_t>(src * r.dim), r.dim,
                    v.features.begin() + static_cast<std::ptrdiff_t>(dst * v.dim));
        std::copy_n(r.boxes.begin() + static_cast<std::ptrdiff_t>(src * 4), 4,
                    v.boxes.begin() + static_cast<std::ptrdiff_t>(dst * 4));
        v.mask[dst] = r.mask[src];
      }
    }
  }
  return v;
}

Batch make_batch(const std::vector<const Sample*>& samples, const Direction& direction, const Vocab& vocab,
                 const VisionStore& vision, const ModelConfig& config) {
  if (samples.empty()) throw DataError("make_batch: no samples");
  vocab.language_tag(direction.src);
  Batch batch;
  batch.direction = direction;
  std::vector<std::vector<std::int32_t>> src, teacher, tgt, dec;
  std::vector<const VisionRecord*> records;
  for (const Sample* s : samples) {
    if (s->lang != direction.tgt) {
      throw DataError("make_batch: sample " + s->id + " is in '" + s->lang + "', direction " + direction.to_string() +
                      " needs '" + direction.tgt + "'");
    }
    const std::vector<std::int32_t>* doc = &s->doc;
    if (!direction.monolingual()) {
      auto it = s->aligned.find(direction.src);
      if (it == s->aligned.end()) {
        throw DataError("make_batch: sample " + s->id + " has no aligned '" + direction.src + "' document for " +
                        direction.to_string());
      }
      doc = &it->second;
    }
    batch.sample_ids.push_back(s->id);
    src.push_back(source_ids(*doc, direction.tgt, vocab, config.max_src_len));
    teacher.push_back(source_ids(s->doc, direction.tgt, vocab, config.max_src_len));
    if (s->summary.empty()) throw DataError("make_batch: sample " + s->id + " has an empty summary");
    std::vector<std::int32_t> t(s->summary.begin(),
                                s->summary.begin() + static_cast<std::ptrdiff_t>(std::min(s->summary.size(), config.max_tgt_len)));
    std::vector<std::int32_t> d{kBos};
    d.insert(d.end(), t.begin(), t.end() - 1);
    tgt.push_back(std::move(t));
    dec.push_back(std::move(d));
    records.push_back(&vision.get(s->vision_ref));
  }
  batch.src = pad_rows(src);
  batch.aligned_src = pad_rows(teacher);
  batch.tgt = pad_rows(tgt);
  batch.decoder_in = pad_rows(dec);
  batch.vision = vision_batch(records, config);
  return batch;
}

}  // namespace m3s::data
