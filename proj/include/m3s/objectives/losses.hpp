// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "m3s/autodiff/tensor.hpp"
#include "m3s/model/config.hpp"
#include "m3s/model/model.hpp"
#include "m3s/model/params.hpp"

namespace m3s::objectives {

enum class KdMode { kCosine, kKl };

KdMode parse_kd_mode(const std::string& name);
std::string to_string(KdMode mode);

/// Scalar values of one training step's objective.
struct LossBundle {
  double l_mms = 0, l_mxls = 0;
  double l_kd_ts = 0;  // teacher -> student
  double l_kd_st = 0;  // student -> teacher
  double l_tco = 0;
  double l_student = 0, l_teacher = 0;
  double alpha = 1, beta = 0, tau = 0.1;
  double joint = 0;
  std::size_t t1 = 0, horizon = 0, max_steps = 0, batch = 0;
};

template <typename T>
using Projection = std::function<ad::Tensor<T>(const ad::Tensor<T>&)>;

/// Token-level cross entropy over [B, N, V] logits, averaged over real target
/// positions. With smoothing > 0 each position's target is (1 - s) on the gold
/// id plus s spread uniformly over the vocabulary.
template <typename T>
ad::Tensor<T> loss_ce(const ad::Tensor<T>& logits, std::span<const std::int32_t> targets,
                      std::span<const std::uint8_t> mask, double smoothing = 0.0);

/// Mean per-position distance between decoder states [B, N, d] over real
/// positions. `reference` is read as a constant: no gradient reaches it.
/// Cosine mode: 1 - cos(reference_t, learner_t). KL mode needs `head` to map
/// states to logits and computes KL(p_reference || p_learner).
template <typename T>
ad::Tensor<T> kd_distance(const ad::Tensor<T>& reference, const ad::Tensor<T>& learner,
                          std::span<const std::uint8_t> mask, KdMode mode = KdMode::kCosine,
                          const Projection<T>& head = {});

double alpha_schedule(std::size_t t1, std::size_t horizon);

/// Masked mean over axis 1 of [B, L, D]; divides by the true count per row.
template <typename T>
ad::Tensor<T> pool_masked(const ad::Tensor<T>& states, std::span<const std::uint8_t> mask);

/// Single-hidden-layer MLP d_v -> d -> d over vision states (parameters "tco.mlp.*").
template <typename T>
void init_tco_params(const ModelConfig& config, ParamStore<T>& params, std::uint64_t seed);
template <typename T>
ad::Tensor<T> project_vision(const ParamStore<T>& params, const ad::Tensor<T>& vision_states);

/// In-batch InfoNCE with cosine similarity: row i's positive is h_sum[i].
template <typename T>
ad::Tensor<T> loss_tco(const ad::Tensor<T>& h_vis, const ad::Tensor<T>& h_sum, double tau);

struct KdOptions {
  KdMode mode = KdMode::kCosine;
  double smoothing = 0.0;
};

/// L_MXLS + alpha * KD(teacher -> student); gradient reaches only the student trace.
template <typename T>
ad::Tensor<T> loss_student(const ForwardTrace<T>& student, const ForwardTrace<T>& teacher,
                           std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask, double alpha,
                           const KdOptions& options = {}, const Projection<T>& head = {});

/// L_MMS + (1 - alpha) * KD(student -> teacher); gradient reaches only the teacher trace.
template <typename T>
ad::Tensor<T> loss_teacher(const ForwardTrace<T>& teacher, const ForwardTrace<T>& student,
                           std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask, double alpha,
                           const KdOptions& options = {}, const Projection<T>& head = {});

template <typename T>
struct JointInputs {
  const ForwardTrace<T>* student = nullptr;  // L_j -> L_i
  const ForwardTrace<T>* teacher = nullptr;  // L_i -> L_i
  std::span<const std::int32_t> targets;     // shared Y^{L_i}, [B, N]
  std::span<const std::uint8_t> target_mask;
  ad::Tensor<T> h_vis;  // [B, d]
  ad::Tensor<T> h_sum;  // [B, d]
};

template <typename T>
struct JointLoss {
  ad::Tensor<T> joint;
  LossBundle values;
};

/// loss_student + loss_teacher + beta * loss_tco for one sampled direction pair.
template <typename T>
JointLoss<T> joint_step_loss(const JointInputs<T>& in, double alpha, double beta, double tau,
                             const KdOptions& options = {}, const Projection<T>& head = {});

}  // namespace m3s::objectives
