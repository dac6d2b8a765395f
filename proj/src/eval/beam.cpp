// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/eval/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "m3s/autodiff/ops.hpp"
#include "m3s/data/vocab.hpp"
#include "m3s/errors.hpp"

namespace m3s::eval {

using ad::Tensor;

void BeamConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam: beam_size must be at least 1");
  if (!(length_penalty >= 0.0)) throw ConfigError("beam: length_penalty must be non-negative");
}

void to_json(nlohmann::json& j, const BeamConfig& c) {
  j = nlohmann::json{{"beam_size", c.beam_size}, {"length_penalty", c.length_penalty}, {"max_len", c.max_len}, {"eos", c.eos}};
}

void from_json(const nlohmann::json& j, BeamConfig& c) {
  BeamConfig d;
  for (const auto& [k, v] : j.items()) {
    if (k == "beam_size") d.beam_size = v.get<std::size_t>();
    else if (k == "length_penalty") d.length_penalty = v.get<double>();
    else if (k == "max_len") d.max_len = v.get<std::size_t>();
    else if (k == "eos") d.eos = v.get<std::int32_t>();
    else throw ConfigError("beam config: unknown key '" + k + "'");
  }
  c = d;
}

double length_penalty(std::size_t length, double gamma) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, gamma);
}

namespace {

struct Encoded {
  Tensor<float> fused;  // [1, M, d]
  std::vector<std::uint8_t> text_mask;
};

Encoded encode(const Model<float>& model, const TokenBatch& src, const VisionBatch& vision) {
  if (src.batch != 1 || vision.batch != 1) throw ConfigError("decoding works on one article at a time");
  Encoded e;
  const Tensor<float> text = model.encode_text(src);
  const Tensor<float> vis = model.encode_vision(vision);
  e.fused = model.fuse(text, vis, src.mask, vision.mask).fused;
  e.text_mask = src.mask;
  return e;
}

bool allowed(std::int32_t id, std::size_t reserved) {
  return id == data::kEos || id == data::kUnk || static_cast<std::size_t>(id) >= reserved;
}

// Log-probabilities of the next token for each prefix (all the same length).
std::vector<std::vector<double>> next_logprobs(const Model<float>& model, const Encoded& enc,
                                               const std::vector<std::vector<std::int32_t>>& prefixes) {
  const std::size_t rows = prefixes.size();
  const std::size_t len = prefixes.front().size();
  TokenBatch dec;
  dec.batch = rows;
  dec.length = len;
  dec.mask.assign(rows * len, 1);
  for (const auto& p : prefixes) dec.ids.insert(dec.ids.end(), p.begin(), p.end());
  std::vector<Tensor<float>> copies(rows, enc.fused);
  const Tensor<float> fused = rows == 1 ? enc.fused : ad::concat<float>(copies, 0);
  std::vector<std::uint8_t> text_mask;
  for (std::size_t r = 0; r < rows; ++r) text_mask.insert(text_mask.end(), enc.text_mask.begin(), enc.text_mask.end());
  const Tensor<float> logits = model.decode(dec, fused, text_mask).logits;  // [rows, len, V]
  const std::size_t vocab = logits.dim(2);
  const auto data = logits.data();
  std::vector<std::vector<double>> out(rows, std::vector<double>(vocab));
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = data.data() + (r * len + len - 1) * vocab;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(static_cast<double>(row[v]) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t v = 0; v < vocab; ++v) out[r][v] = static_cast<double>(row[v]) - lz;
  }
  return out;
}

std::size_t resolve_max_len(const Model<float>& model, std::size_t max_len) {
  const std::size_t cap = model.config().max_tgt_len;
  return max_len == 0 ? cap : std::min(max_len, cap);
}

}  // namespace

Hypothesis beam_search(const Model<float>& model, const TokenBatch& src, const VisionBatch& vision,
                       const BeamConfig& config, std::size_t reserved_ids) {
  config.validate();
  ad::NoTapeScope<float> no_tape;
  const Encoded enc = encode(model, src, vision);
  const std::size_t max_len = resolve_max_len(model, config.max_len);

  struct Live {
    std::vector<std::int32_t> tokens;
    double logprob;
  };
  std::vector<Live> live{{{}, 0.0}};
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<std::vector<std::int32_t>> prefixes;
    for (const auto& h : live) {
      std::vector<std::int32_t> p{data::kBos};
      p.insert(p.end(), h.tokens.begin(), h.tokens.end());
      prefixes.push_back(std::move(p));
    }
    const auto lp = next_logprobs(model, enc, prefixes);

    struct Candidate {
      double logprob;
      std::size_t parent;
      std::int32_t token;
    };
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (std::size_t v = 0; v < lp[h].size(); ++v) {
        const auto id = static_cast<std::int32_t>(v);
        if (allowed(id, reserved_ids)) cands.push_back({live[h].logprob + lp[h][v], h, id});
      }
    }
    // every candidate has length t+1, so the penalty does not change the order
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logprob > b.logprob; });

    // EOS candidates ranked above the last kept live candidate become finished
    std::vector<Live> next;
    for (const auto& c : cands) {
      if (next.size() == config.beam_size) break;
      std::vector<std::int32_t> tokens = live[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == config.eos) {
        const double penalized = c.logprob / length_penalty(tokens.size(), config.length_penalty);
        finished.push_back({std::move(tokens), c.logprob, penalized, true});
      } else {
        next.push_back({std::move(tokens), c.logprob});
      }
    }
    live = std::move(next);
    if (finished.size() >= config.beam_size) break;
  }

  auto better = [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; };
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), better);
  std::vector<Hypothesis> open;
  for (const auto& h : live) open.push_back({h.tokens, h.logprob, h.logprob / length_penalty(h.tokens.size(), config.length_penalty), false});
  if (open.empty()) throw ContractViolation("beam_search: no hypotheses left");
  return *std::min_element(open.begin(), open.end(), better);
}

Hypothesis greedy_decode(const Model<float>& model, const TokenBatch& src, const VisionBatch& vision,
                         std::size_t max_len, std::int32_t eos, std::size_t reserved_ids) {
  ad::NoTapeScope<float> no_tape;
  const Encoded enc = encode(model, src, vision);
  max_len = resolve_max_len(model, max_len);
  Hypothesis h;
  std::vector<std::int32_t> prefix{data::kBos};
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto lp = next_logprobs(model, enc, {prefix}).front();
    std::int32_t best = -1;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const auto id = static_cast<std::int32_t>(v);
      if (allowed(id, reserved_ids) && (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)])) best = id;
    }
    h.tokens.push_back(best);
    h.logprob += lp[static_cast<std::size_t>(best)];
    prefix.push_back(best);
    if (best == eos) {
      h.finished = true;
      break;
    }
  }
  h.score = h.logprob;
  return h;
}

}  // namespace m3s::eval
