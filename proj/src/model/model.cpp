// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/model/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "m3s/autodiff/ops.hpp"
#include "m3s/errors.hpp"

namespace m3s {

using ad::Shape;
using ad::Tensor;

namespace {

// Additive masking value for attention logits.
constexpr double kMaskedLogit = -1e9;

template <typename T>
void add_linear(ParamStore<T>& ps, Initializer& init, const std::string& prefix, std::size_t in, std::size_t out,
                bool bias = true) {
  ps.add(prefix + ".w", {in, out}, init.xavier<T>(in, out));
  if (bias) ps.add(prefix + ".b", {out}, Initializer::filled<T>(out, T(0)));
}

template <typename T>
void add_norm(ParamStore<T>& ps, const std::string& prefix, std::size_t dim) {
  ps.add(prefix + ".g", {dim}, Initializer::filled<T>(dim, T(1)));
  ps.add(prefix + ".b", {dim}, Initializer::filled<T>(dim, T(0)));
}

template <typename T>
void add_attention(ParamStore<T>& ps, Initializer& init, const std::string& prefix, std::size_t q_dim,
                   std::size_t kv_dim) {
  add_linear(ps, init, prefix + ".q", q_dim, q_dim);
  add_linear(ps, init, prefix + ".k", kv_dim, q_dim);
  add_linear(ps, init, prefix + ".v", kv_dim, q_dim);
  add_linear(ps, init, prefix + ".o", q_dim, q_dim);
}

template <typename T>
void add_ffn(ParamStore<T>& ps, Initializer& init, const std::string& prefix, std::size_t dim, std::size_t hidden) {
  add_linear(ps, init, prefix + ".fc1", dim, hidden);
  add_linear(ps, init, prefix + ".fc2", hidden, dim);
}

}  // namespace

void TokenBatch::validate(const char* what) const {
  if (batch == 0 || length == 0) throw DataError(std::string(what) + ": empty token batch");
  if (ids.size() != batch * length || mask.size() != batch * length) {
    throw DataError(std::string(what) + ": ids/mask do not match [batch, length]");
  }
}

template <typename T>
Model<T>::Model(ModelConfig config, const ParamStore<T>& params) : config_(std::move(config)), params_(params) {
  config_.validate();
}

template <typename T>
void Model<T>::init_params(const ModelConfig& c, ParamStore<T>& ps, std::uint64_t seed) {
  c.validate();
  Initializer init(seed);
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(c.d));
  ps.add("text.embed", {c.vocab_size, c.d}, init.normal<T>(c.vocab_size * c.d, embed_std));
  ps.add("text.pos", {c.max_src_len, c.d}, init.normal<T>(c.max_src_len * c.d, embed_std));
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    add_attention(ps, init, p + ".attn", c.d, c.d);
    add_norm(ps, p + ".ln1", c.d);
    add_ffn(ps, init, p + ".ffn", c.d, c.ffn_dim);
    add_norm(ps, p + ".ln2", c.d);
  }

  const double vis_std = 1.0 / std::sqrt(static_cast<double>(c.d_v));
  add_linear(ps, init, "vis.box", 4, c.d_v);
  ps.add("vis.img", {c.images, c.d_v}, init.normal<T>(c.images * c.d_v, vis_std));
  ps.add("vis.reg", {c.regions, c.d_v}, init.normal<T>(c.regions * c.d_v, vis_std));
  for (std::size_t l = 0; l < c.vis_layers; ++l) {
    const std::string p = "vis." + std::to_string(l);
    add_attention(ps, init, p + ".attn", c.d_v, c.d_v);
    add_norm(ps, p + ".ln1", c.d_v);
    add_ffn(ps, init, p + ".ffn", c.d_v, c.vision_ffn_dim);
    add_norm(ps, p + ".ln2", c.d_v);
  }

  add_linear(ps, init, "fuse.q", c.d, c.d_c, false);
  add_linear(ps, init, "fuse.k", c.d_v, c.d_c, false);
  add_linear(ps, init, "fuse.v", c.d_v, c.d_c, false);
  add_linear(ps, init, "fuse.gate", c.d + c.d_c, c.d_c);
  add_linear(ps, init, "fuse.out", c.d + c.d_c, c.d);

  ps.add("dec.pos", {c.max_tgt_len, c.d}, init.normal<T>(c.max_tgt_len * c.d, embed_std));
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    add_attention(ps, init, p + ".self", c.d, c.d);
    add_norm(ps, p + ".ln1", c.d);
    add_attention(ps, init, p + ".cross", c.d, c.d);
    add_norm(ps, p + ".ln2", c.d);
    add_ffn(ps, init, p + ".ffn", c.d, c.ffn_dim);
    add_norm(ps, p + ".ln3", c.d);
  }
  add_linear(ps, init, "out", c.d, c.vocab_size);
}

template <typename T>
Tensor<T> Model<T>::linear(const std::string& prefix, const Tensor<T>& x) const {
  Tensor<T> y = ad::matmul(x, params_.get(prefix + ".w"));
  if (params_.contains(prefix + ".b")) y = ad::add(y, params_.get(prefix + ".b"));
  return y;
}

template <typename T>
Tensor<T> Model<T>::ffn(const std::string& prefix, const Tensor<T>& x) const {
  return linear(prefix + ".fc2", ad::gelu(linear(prefix + ".fc1", x)));
}

template <typename T>
Tensor<T> Model<T>::norm(const std::string& prefix, const Tensor<T>& x) const {
  return ad::layer_norm(x, params_.get(prefix + ".g"), params_.get(prefix + ".b"),
                        static_cast<T>(config_.layer_norm_eps));
}

template <typename T>
Tensor<T> Model<T>::attention(const std::string& prefix, const Tensor<T>& query_in, const Tensor<T>& key_in,
                              std::span<const std::uint8_t> query_mask, std::span<const std::uint8_t> key_mask,
                              const AttentionSpec& spec) const {
  const std::size_t batch = query_in.dim(0);
  const std::size_t lq = query_in.dim(1);
  const std::size_t lk = key_in.dim(1);
  if (key_in.dim(0) != batch) throw ConfigError(prefix + ": query/key batch differ");
  if (query_mask.size() != batch * lq || key_mask.size() != batch * lk) {
    throw ConfigError(prefix + ": mask sizes do not match inputs");
  }

  Tensor<T> q = linear(prefix + ".q", query_in);
  Tensor<T> k = linear(prefix + ".k", key_in);
  Tensor<T> v = linear(prefix + ".v", key_in);
  const std::size_t width = q.shape().back();
  const std::size_t heads = spec.heads;
  const std::size_t head_dim = width / heads;

  auto split_heads = [&](const Tensor<T>& t, std::size_t len) {
    return ad::permute(ad::reshape(t, {batch, len, heads, head_dim}), {0, 2, 1, 3});
  };
  q = split_heads(q, lq);
  k = split_heads(k, lk);
  v = split_heads(v, lk);

  std::vector<std::uint8_t> blocked(batch * heads * lq * lk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < lq; ++i) {
      std::size_t visible = 0;
      for (std::size_t j = 0; j < lk; ++j) {
        const bool hidden = key_mask[b * lk + j] == 0 || (spec.causal && j > i);
        if (!hidden) ++visible;
        for (std::size_t h = 0; h < heads; ++h) blocked[((b * heads + h) * lq + i) * lk + j] = hidden ? 1 : 0;
      }
      if (visible == 0 && query_mask[b * lq + i] != 0) {
        throw DataError(prefix + ": real query position " + std::to_string(i) + " of sample " + std::to_string(b) +
                        " has no visible keys");
      }
    }
  }

  Tensor<T> scores = ad::scale(ad::matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(double(head_dim))));
  scores = ad::masked_fill(scores, std::span<const std::uint8_t>(blocked), static_cast<T>(kMaskedLogit));
  Tensor<T> probs = ad::softmax(scores, 3);
  Tensor<T> context = ad::matmul(probs, v);
  context = ad::reshape(ad::permute(context, {0, 2, 1, 3}), {batch, lq, width});
  if (spec.output_projection) context = linear(prefix + ".o", context);
  return context;
}

template <typename T>
Tensor<T> Model<T>::encoder_layer(const std::string& prefix, const Tensor<T>& x, std::span<const std::uint8_t> mask,
                                  std::size_t heads) const {
  const AttentionSpec spec{heads, true, false};
  Tensor<T> s = norm(prefix + ".ln1", ad::add(x, attention(prefix + ".attn", x, x, mask, mask, spec)));
  return norm(prefix + ".ln2", ad::add(s, ffn(prefix + ".ffn", s)));
}

template <typename T>
Tensor<T> Model<T>::encode_text(const TokenBatch& tokens) const {
  tokens.validate("encode_text");
  if (tokens.length > config_.max_src_len) {
    throw DataError("encode_text: length " + std::to_string(tokens.length) + " exceeds max_src_len " +
                    std::to_string(config_.max_src_len));
  }
  Tensor<T> x = ad::embedding(params_.get("text.embed"), std::span<const std::int32_t>(tokens.ids),
                              {tokens.batch, tokens.length});
  x = ad::add(x, ad::slice(params_.get("text.pos"), 0, 0, tokens.length));
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    x = encoder_layer("enc." + std::to_string(l), x, tokens.mask, config_.text_heads);
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::encode_vision(const VisionBatch& vin) const {
  if (vin.images == 0 || vin.regions == 0 || vin.images > config_.images || vin.regions > config_.regions) {
    throw ConfigError("encode_vision: " + std::to_string(vin.images) + "x" + std::to_string(vin.regions) +
                      " regions exceed configured " + std::to_string(config_.images) + "x" +
                      std::to_string(config_.regions));
  }
  if (vin.dim != config_.d_v) throw ConfigError("encode_vision: feature size does not match d_v");
  const std::size_t slots = vin.slots();
  if (vin.features.size() != vin.batch * slots * vin.dim || vin.boxes.size() != vin.batch * slots * 4 ||
      vin.mask.size() != vin.batch * slots) {
    throw DataError("encode_vision: feature/box/mask sizes inconsistent");
  }
  for (float b : vin.boxes) {
    if (!std::isfinite(b) || b < 0.0f || b > 1.0f) throw DataError("encode_vision: box coordinate outside [0,1]");
  }
  std::vector<std::int32_t> img_ids(slots), reg_ids(slots);
  for (std::size_t i = 0; i < vin.images; ++i) {
    for (std::size_t j = 0; j < vin.regions; ++j) {
      img_ids[i * vin.regions + j] = vin.image_ids.empty() ? static_cast<std::int32_t>(i) : vin.image_ids.at(i);
      reg_ids[i * vin.regions + j] = vin.region_ids.empty() ? static_cast<std::int32_t>(j) : vin.region_ids.at(j);
    }
  }

  const Tensor<T> features = Tensor<T>::constant({vin.batch, slots, vin.dim},
                                                 std::vector<T>(vin.features.begin(), vin.features.end()));
  const Tensor<T> boxes = Tensor<T>::constant({vin.batch, slots, 4}, std::vector<T>(vin.boxes.begin(), vin.boxes.end()));
  Tensor<T> order = ad::add(ad::embedding(params_.get("vis.img"), std::span<const std::int32_t>(img_ids), {slots}),
                            ad::embedding(params_.get("vis.reg"), std::span<const std::int32_t>(reg_ids), {slots}));
  Tensor<T> x = ad::add(ad::add(features, linear("vis.box", boxes)), order);
  for (std::size_t l = 0; l < config_.vis_layers; ++l) {
    x = encoder_layer("vis." + std::to_string(l), x, vin.mask, config_.vision_heads);
  }
  return x;
}

template <typename T>
FusionOutput<T> Model<T>::fuse(const Tensor<T>& text_states, const Tensor<T>& vision_states,
                               std::span<const std::uint8_t> text_mask,
                               std::span<const std::uint8_t> vision_mask) const {
  const AttentionSpec spec{config_.fusion_heads, false, false};
  FusionOutput<T> out;
  out.cross_modal = attention("fuse", text_states, vision_states, text_mask, vision_mask, spec);
  out.gate = ad::sigmoid(linear("fuse.gate", ad::concat<T>({text_states, out.cross_modal}, 2)));
  out.vision_gated = ad::mul(out.gate, out.cross_modal);
  out.fused = linear("fuse.out", ad::concat<T>({text_states, out.vision_gated}, 2));
  return out;
}

template <typename T>
Tensor<T> Model<T>::output_logits(const Tensor<T>& hidden) const {
  return linear("out", hidden);
}

template <typename T>
DecoderOutput<T> Model<T>::decode(const TokenBatch& decoder_in, const Tensor<T>& fused,
                                  std::span<const std::uint8_t> text_mask) const {
  decoder_in.validate("decode");
  if (decoder_in.length > config_.max_tgt_len) {
    throw DataError("decode: target length " + std::to_string(decoder_in.length) + " exceeds max_tgt_len " +
                    std::to_string(config_.max_tgt_len));
  }
  Tensor<T> x = ad::embedding(params_.get("text.embed"), std::span<const std::int32_t>(decoder_in.ids),
                              {decoder_in.batch, decoder_in.length});
  x = ad::add(x, ad::slice(params_.get("dec.pos"), 0, 0, decoder_in.length));
  const AttentionSpec self_spec{config_.text_heads, true, true};
  const AttentionSpec cross_spec{config_.text_heads, true, false};
  DecoderOutput<T> out;
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    Tensor<T> s = norm(p + ".ln1", ad::add(x, attention(p + ".self", x, x, decoder_in.mask, decoder_in.mask, self_spec)));
    Tensor<T> c = norm(p + ".ln2", ad::add(s, attention(p + ".cross", s, fused, decoder_in.mask, text_mask, cross_spec)));
    x = norm(p + ".ln3", ad::add(c, ffn(p + ".ffn", c)));
    out.layers.push_back(x);
  }
  out.logits = output_logits(x);
  return out;
}

template <typename T>
ForwardTrace<T> Model<T>::forward(const TokenBatch& src, const VisionBatch& vision,
                                  const TokenBatch& decoder_in) const {
  if (src.batch != vision.batch) throw ConfigError("forward: source and vision batch sizes differ");
  return forward(src, encode_vision(vision), vision.mask, decoder_in);
}

template <typename T>
ForwardTrace<T> Model<T>::forward(const TokenBatch& src, const Tensor<T>& vision_states,
                                  std::span<const std::uint8_t> vision_mask, const TokenBatch& decoder_in) const {
  if (src.batch != vision_states.dim(0) || src.batch != decoder_in.batch) {
    throw ConfigError("forward: source, vision and target batch sizes differ");
  }
  ForwardTrace<T> trace;
  trace.text_states = encode_text(src);
  trace.vision_states = vision_states;
  trace.fusion = fuse(trace.text_states, trace.vision_states, src.mask, vision_mask);
  trace.decoder = decode(decoder_in, trace.fusion.fused, src.mask);
  return trace;
}

template class Model<float>;
template class Model<double>;

}  // namespace m3s
