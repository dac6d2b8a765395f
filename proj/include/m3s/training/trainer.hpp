// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "m3s/data/batch.hpp"
#include "m3s/data/corpus.hpp"
#include "m3s/data/vision_io.hpp"
#include "m3s/data/vocab.hpp"
#include "m3s/model/config.hpp"
#include "m3s/model/params.hpp"
#include "m3s/objectives/losses.hpp"
#include "m3s/training/checkpoint.hpp"
#include "m3s/training/train_config.hpp"

namespace m3s::training {

struct TrainData {
  data::Vocab vocab;
  std::vector<data::Sample> samples;
  data::VisionStore vision;
};

/// Adam with bias correction over a ParamStore. Moments are kept in float,
/// like the parameters, so checkpoints round-trip them exactly.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore<float>& params, double beta1, double beta2, double eps);

  /// One update at learning rate lr; parameters without a gradient see zero.
  void update(ParamStore<float>& params, double lr);

  std::size_t step() const { return step_; }
  std::vector<std::vector<float>>& m() { return m_; }
  std::vector<std::vector<float>>& v() { return v_; }
  const std::vector<std::vector<float>>& m() const { return m_; }
  const std::vector<std::vector<float>>& v() const { return v_; }
  void restore(std::size_t step, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v);

 private:
  double beta1_ = 0.9, beta2_ = 0.998, eps_ = 1e-9;
  std::size_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

/// Student pass (src), teacher pass (aligned_src) over shared vision states,
/// optional TCO over the gold summary, then joint_step_loss. Records on the
/// active tape if there is one.
template <typename T>
objectives::JointLoss<T> batch_loss(const ModelConfig& model, const ParamStore<T>& params, const data::Batch& batch,
                                    double alpha, const TrainConfig& train);

/// Checks every ordered direction is buildable for every sample before step 0.
void validate_training_data(const TrainData& data, const ModelConfig& model);

struct StepRecord {
  std::size_t step = 0;  // number of completed steps after this one
  data::Direction direction;
  double lr = 0;
  objectives::LossBundle losses;
};

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, TrainData data);
  /// Continues from a checkpoint; `train` may raise max_steps or change paths.
  Trainer(const Checkpoint& ck, TrainConfig train, TrainData data);

  StepRecord step();
  /// Runs until `steps()` reaches target, logging metrics and saving checkpoints
  /// every eval_interval steps (and at the end) when paths are configured.
  std::vector<StepRecord> run_until(std::size_t target);
  void set_observer(std::function<void(const StepRecord&)> fn) { observer_ = std::move(fn); }

  Checkpoint checkpoint() const;

  std::size_t steps() const { return step_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  const ParamStore<float>& params() const { return params_; }
  ParamStore<float>& params() { return params_; }
  const TrainData& data() const { return data_; }

  /// Direction of the next step without consuming randomness.
  data::Direction peek_direction() const;

 private:
  void index_samples();
  data::Direction sample_direction(std::mt19937_64& rng) const;
  std::vector<const data::Sample*> sample_batch(std::mt19937_64& rng, const std::string& lang) const;
  void log_metrics(const StepRecord& r) const;

  ModelConfig model_;
  TrainConfig train_;
  TrainData data_;
  ParamStore<float> params_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::size_t step_ = 0;
  std::map<std::string, std::vector<std::size_t>> by_lang_;
  std::function<void(const StepRecord&)> observer_;
};

std::string serialize_rng(const std::mt19937_64& rng);
std::mt19937_64 deserialize_rng(const std::string& text);

}  // namespace m3s::training
