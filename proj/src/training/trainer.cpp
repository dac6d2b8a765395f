// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "m3s/errors.hpp"
#include "m3s/model/model.hpp"

namespace m3s::training {

using objectives::JointLoss;

Adam::Adam(const ParamStore<float>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0f);
    v_.emplace_back(e.tensor.size(), 0.0f);
  }
}

void Adam::restore(std::size_t step, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ContractViolation("Adam::restore: state size mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
      throw ContractViolation("Adam::restore: moment size mismatch");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::update(ParamStore<float>& params, double lr) {
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw ContractViolation("Adam::update: parameter set changed");
  ++step_;
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(step_)));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(step_)));
  const float rate = static_cast<float>(lr);
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].tensor;
    const bool has = t.has_grad();
    const std::span<const float> g = t.grad();
    const std::span<float> w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const float gk = has ? g[k] : 0.0f;
      m[k] = b1 * m[k] + (1.0f - b1) * gk;
      v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
      const float mhat = m[k] / c1;
      const float vhat = v[k] / c2;
      w[k] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
  double total = 0.0;
  for (auto& e : params.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) total += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& e : params.entries()) {
      if (!e.tensor.has_grad()) continue;
      for (auto& g : e.tensor.node().grad) g *= s;
    }
  }
  return norm;
}

template <typename T>
JointLoss<T> batch_loss(const ModelConfig& config, const ParamStore<T>& params, const data::Batch& batch, double alpha,
                        const TrainConfig& train) {
  const Model<T> model(config, params);
  const ad::Tensor<T> vision = model.encode_vision(batch.vision);
  const ForwardTrace<T> student = model.forward(batch.src, vision, batch.vision.mask, batch.decoder_in);
  const ForwardTrace<T> teacher = model.forward(batch.aligned_src, vision, batch.vision.mask, batch.decoder_in);

  objectives::JointInputs<T> in;
  in.student = &student;
  in.teacher = &teacher;
  in.targets = batch.tgt.ids;
  in.target_mask = batch.tgt.mask;
  if (train.beta > 0.0) {
    in.h_sum = objectives::pool_masked(model.encode_text(batch.tgt), std::span<const std::uint8_t>(batch.tgt.mask));
    in.h_vis = objectives::pool_masked(objectives::project_vision(params, vision),
                                       std::span<const std::uint8_t>(batch.vision.mask));
  }
  const objectives::KdOptions options{objectives::parse_kd_mode(train.kd_mode), train.smoothing};
  const objectives::Projection<T> head = [&model](const ad::Tensor<T>& h) { return model.output_logits(h); };
  return objectives::joint_step_loss(in, alpha, train.beta, train.tau, options, head);
}

template JointLoss<float> batch_loss(const ModelConfig&, const ParamStore<float>&, const data::Batch&, double,
                                     const TrainConfig&);
template JointLoss<double> batch_loss(const ModelConfig&, const ParamStore<double>&, const data::Batch&, double,
                                      const TrainConfig&);

void validate_training_data(const TrainData& data, const ModelConfig& model) {
  const auto& langs = data.vocab.languages();
  if (langs.size() < 2) throw ConfigError("training needs at least 2 languages");
  if (langs.size() != model.languages) {
    throw ConfigError("vocab has " + std::to_string(langs.size()) + " languages, model config expects " +
                      std::to_string(model.languages));
  }
  if (data.vocab.size() > model.vocab_size) {
    throw ConfigError("vocab holds " + std::to_string(data.vocab.size()) + " ids, model vocab_size is " +
                      std::to_string(model.vocab_size));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& s : data.samples) {
    data.vocab.language_tag(s.lang);
    ++counts[s.lang];
    for (const auto& other : langs) {
      if (other != s.lang && s.aligned.count(other) == 0) {
        throw DataError("sample " + s.id + " has no aligned '" + other + "' document (direction " + other + "-" +
                        s.lang + ")");
      }
    }
    data.vision.get(s.vision_ref);
  }
  for (const auto& l : langs) {
    if (counts[l] == 0) throw DataError("no training samples in language '" + l + "'");
  }
}

std::string serialize_rng(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 deserialize_rng(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 rng;
  in >> rng;
  if (!in) throw LoadError("corrupt RNG state");
  return rng;
}

namespace {

std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig train, TrainData data)
    : model_(std::move(model)), train_(std::move(train)), data_(std::move(data)) {
  model_.validate();
  train_.validate();
  validate_training_data(data_, model_);
  Model<float>::init_params(model_, params_, train_.seed);
  objectives::init_tco_params(model_, params_, train_.seed + 1);
  adam_ = Adam(params_, train_.beta1, train_.beta2, train_.adam_eps);
  rng_.seed(train_.seed ^ 0x9e3779b97f4a7c15ULL);
  index_samples();
}

Trainer::Trainer(const Checkpoint& ck, TrainConfig train, TrainData data)
    : model_(ck.model), train_(std::move(train)), data_(std::move(data)) {
  train_.validate();
  validate_training_data(data_, model_);
  if (data_.vocab.words() != ck.vocab_words || data_.vocab.languages() != ck.languages) {
    throw DataError("resume: corpus vocabulary differs from the checkpoint's");
  }
  for (const auto& e : ck.params.entries()) params_.add(e.name, e.tensor.shape(), std::vector<float>(e.tensor.data().begin(), e.tensor.data().end()));
  adam_ = Adam(params_, train_.beta1, train_.beta2, train_.adam_eps);
  adam_.restore(ck.adam_step, ck.adam_m, ck.adam_v);
  rng_ = deserialize_rng(ck.rng_state);
  step_ = ck.step;
  index_samples();
}

void Trainer::index_samples() {
  by_lang_.clear();
  for (std::size_t i = 0; i < data_.samples.size(); ++i) by_lang_[data_.samples[i].lang].push_back(i);
}

data::Direction Trainer::sample_direction(std::mt19937_64& rng) const {
  const auto& langs = data_.vocab.languages();
  const std::size_t k = langs.size();
  const std::size_t i = draw(rng, k);
  std::size_t j = draw(rng, k - 1);
  if (j >= i) ++j;
  return {langs[j], langs[i]};
}

std::vector<const data::Sample*> Trainer::sample_batch(std::mt19937_64& rng, const std::string& lang) const {
  std::vector<std::size_t> pool = by_lang_.at(lang);
  const std::size_t take = std::min(train_.batch, pool.size());
  std::vector<const data::Sample*> out;
  for (std::size_t t = 0; t < take; ++t) {
    std::swap(pool[t], pool[t + draw(rng, pool.size() - t)]);
    out.push_back(&data_.samples[pool[t]]);
  }
  return out;
}

data::Direction Trainer::peek_direction() const {
  std::mt19937_64 copy = rng_;
  return sample_direction(copy);
}

StepRecord Trainer::step() {
  const data::Direction dir = sample_direction(rng_);
  const auto samples = sample_batch(rng_, dir.tgt);
  const data::Batch batch = data::make_batch(samples, dir, data_.vocab, data_.vision, model_);
  const double alpha = train_.fixed_alpha ? *train_.fixed_alpha : objectives::alpha_schedule(step_, train_.horizon);

  params_.zero_grad();
  ad::Tape<float> tape;
  JointLoss<float> loss;
  {
    ad::TapeScope<float> scope(tape);
    try {
      loss = batch_loss(model_, params_, batch, alpha, train_);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step_) + ", direction " + dir.to_string() + ": " + e.what());
    }
  }
  const auto& v = loss.values;
  if (!std::isfinite(v.joint)) {
    std::ostringstream msg;
    msg << "step " << step_ << ", direction " << dir.to_string() << ": non-finite loss (mxls " << v.l_mxls << ", mms "
        << v.l_mms << ", kd_ts " << v.l_kd_ts << ", kd_st " << v.l_kd_st << ", tco " << v.l_tco << ")";
    throw NumericError(msg.str());
  }
  tape.backward(loss.joint);
  if (train_.clip_norm > 0.0) clip_grad_norm(params_, train_.clip_norm);
  const double lr = learning_rate(train_, adam_.step() + 1);
  adam_.update(params_, lr);

  StepRecord r;
  r.step = ++step_;
  r.direction = dir;
  r.lr = lr;
  r.losses = loss.values;
  r.losses.t1 = step_ - 1;
  r.losses.horizon = train_.horizon;
  r.losses.max_steps = train_.max_steps;
  return r;
}

void Trainer::log_metrics(const StepRecord& r) const {
  if (train_.metrics_path.empty()) return;
  std::ofstream out(train_.metrics_path, std::ios::app);
  if (!out) throw DataError("cannot append to metrics log " + train_.metrics_path);
  const auto& v = r.losses;
  nlohmann::json line{{"step", r.step},       {"t1", v.t1},           {"direction", r.direction.to_string()},
                      {"alpha", v.alpha},     {"lr", r.lr},           {"joint", v.joint},
                      {"l_mxls", v.l_mxls},   {"l_mms", v.l_mms},     {"l_kd_ts", v.l_kd_ts},
                      {"l_kd_st", v.l_kd_st}, {"l_tco", v.l_tco},     {"l_student", v.l_student},
                      {"l_teacher", v.l_teacher}, {"beta", v.beta}, {"tau", v.tau}};
  out << line.dump() << '\n';
}

std::vector<StepRecord> Trainer::run_until(std::size_t target) {
  std::vector<StepRecord> records;
  while (step_ < target) {
    records.push_back(step());
    const StepRecord& r = records.back();
    if (observer_) observer_(r);
    if (r.step % train_.eval_interval == 0 || r.step == target) {
      log_metrics(r);
      if (!train_.checkpoint_path.empty()) save_checkpoint(checkpoint(), train_.checkpoint_path);
    }
  }
  return records;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.model = model_;
  ck.train = train_;
  ck.step = step_;
  ck.rng_state = serialize_rng(rng_);
  ck.languages = data_.vocab.languages();
  ck.vocab_words = data_.vocab.words();
  for (const auto& e : params_.entries()) ck.params.add(e.name, e.tensor.shape(), std::vector<float>(e.tensor.data().begin(), e.tensor.data().end()));
  ck.adam_step = adam_.step();
  ck.adam_m = adam_.m();
  ck.adam_v = adam_.v();
  return ck;
}

}  // namespace m3s::training
