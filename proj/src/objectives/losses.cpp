// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "m3s/autodiff/ops.hpp"
#include "m3s/errors.hpp"

namespace m3s::objectives {

using ad::Tensor;

KdMode parse_kd_mode(const std::string& name) {
  if (name == "cosine") return KdMode::kCosine;
  if (name == "kl") return KdMode::kKl;
  throw ConfigError("unknown kd mode '" + name + "' (expected cosine or kl)");
}

std::string to_string(KdMode mode) {
  return mode == KdMode::kCosine ? "cosine" : "kl";
}

namespace {

std::vector<std::size_t> real_positions(std::span<const std::uint8_t> mask, const char* what) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(i);
  }
  if (rows.empty()) throw DataError(std::string(what) + ": every position is masked");
  return rows;
}

}  // namespace

template <typename T>
Tensor<T> loss_ce(const Tensor<T>& logits, std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask,
                  double smoothing) {
  if (logits.rank() != 3) throw ConfigError("loss_ce: logits must be [B, N, V]");
  const std::size_t positions = logits.dim(0) * logits.dim(1);
  if (targets.size() != positions || mask.size() != positions) {
    throw ConfigError("loss_ce: targets/mask do not match logits " + ad::to_string(logits.shape()));
  }
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("loss_ce: smoothing must lie in [0, 1)");
  const auto rows = real_positions(mask, "loss_ce");
  std::vector<std::int32_t> gold(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) gold[r] = targets[rows[r]];

  const Tensor<T> log_probs = ad::log_softmax(ad::gather_rows(logits, std::span<const std::size_t>(rows)), 1);
  Tensor<T> per_token = ad::scale(ad::pick(log_probs, std::span<const std::int32_t>(gold)), T(-1));
  if (smoothing > 0.0) {
    const Tensor<T> uniform = ad::scale(ad::mean(log_probs, 1), T(-1));
    per_token = ad::add(ad::scale(per_token, static_cast<T>(1.0 - smoothing)),
                        ad::scale(uniform, static_cast<T>(smoothing)));
  }
  return ad::mean_all(per_token);
}

template <typename T>
Tensor<T> kd_distance(const Tensor<T>& reference, const Tensor<T>& learner, std::span<const std::uint8_t> mask,
                      KdMode mode, const Projection<T>& head) {
  if (reference.shape() != learner.shape()) {
    throw ContractViolation("kd_distance: decoder states differ in shape " + ad::to_string(reference.shape()) +
                            " vs " + ad::to_string(learner.shape()));
  }
  if (reference.rank() != 3 || mask.size() != reference.dim(0) * reference.dim(1)) {
    throw ConfigError("kd_distance: states must be [B, N, d] with a [B, N] mask");
  }
  const auto rows = real_positions(mask, "kd_distance");
  const std::span<const std::size_t> row_span(rows);
  const Tensor<T> learn = ad::gather_rows(learner, row_span);

  if (mode == KdMode::kCosine) {
    const Tensor<T> ref = ad::detach(ad::gather_rows(reference, row_span));
    const Tensor<T> cos = ad::cosine_similarity(ref, learn);
    return ad::mean_all(ad::add_scalar(ad::scale(cos, T(-1)), T(1)));
  }

  if (!head) throw ConfigError("kd_distance: kl mode needs an output projection");
  Tensor<T> ref_log_probs;
  {
    ad::NoTapeScope<T> constant;
    ref_log_probs = ad::detach(ad::log_softmax(head(ad::gather_rows(reference, row_span)), 1));
  }
  std::vector<T> probs(ref_log_probs.size());
  std::transform(ref_log_probs.data().begin(), ref_log_probs.data().end(), probs.begin(),
                 [](T lp) { return std::exp(lp); });
  const Tensor<T> ref_probs = Tensor<T>::constant(ref_log_probs.shape(), std::move(probs));
  const Tensor<T> learn_log_probs = ad::log_softmax(head(learn), 1);
  const Tensor<T> kl_rows = ad::sum(ad::mul(ref_probs, ad::sub(ref_log_probs, learn_log_probs)), 1);
  return ad::mean_all(kl_rows);
}

double alpha_schedule(std::size_t t1, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("alpha_schedule: annealing horizon T1 must be positive");
  return std::max(0.5, 1.0 - static_cast<double>(t1) / static_cast<double>(horizon));
}

template <typename T>
Tensor<T> pool_masked(const Tensor<T>& states, std::span<const std::uint8_t> mask) {
  if (states.rank() != 3 || mask.size() != states.dim(0) * states.dim(1)) {
    throw ConfigError("pool_masked: states must be [B, L, D] with a [B, L] mask");
  }
  const std::size_t batch = states.dim(0), len = states.dim(1), dim = states.dim(2);
  std::vector<T> weights(states.size(), T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t l = 0; l < len; ++l) count += mask[b * len + l] ? 1 : 0;
    if (count == 0) throw PoolingError("pool_masked: row " + std::to_string(b) + " has no unmasked element");
    const T w = T(1) / static_cast<T>(count);
    for (std::size_t l = 0; l < len; ++l) {
      if (!mask[b * len + l]) continue;
      std::fill_n(weights.begin() + static_cast<std::ptrdiff_t>((b * len + l) * dim), dim, w);
    }
  }
  const Tensor<T> w = Tensor<T>::constant(states.shape(), std::move(weights));
  return ad::sum(ad::mul(states, w), 1);
}

template <typename T>
void init_tco_params(const ModelConfig& config, ParamStore<T>& params, std::uint64_t seed) {
  Initializer init(seed);
  params.add("tco.mlp.fc1.w", {config.d_v, config.d}, init.xavier<T>(config.d_v, config.d));
  params.add("tco.mlp.fc1.b", {config.d}, Initializer::filled<T>(config.d, T(0)));
  params.add("tco.mlp.fc2.w", {config.d, config.d}, init.xavier<T>(config.d, config.d));
  params.add("tco.mlp.fc2.b", {config.d}, Initializer::filled<T>(config.d, T(0)));
}

template <typename T>
Tensor<T> project_vision(const ParamStore<T>& params, const Tensor<T>& vision_states) {
  Tensor<T> h = ad::add(ad::matmul(vision_states, params.get("tco.mlp.fc1.w")), params.get("tco.mlp.fc1.b"));
  h = ad::gelu(h);
  return ad::add(ad::matmul(h, params.get("tco.mlp.fc2.w")), params.get("tco.mlp.fc2.b"));
}

template <typename T>
Tensor<T> loss_tco(const Tensor<T>& h_vis, const Tensor<T>& h_sum, double tau) {
  if (h_vis.rank() != 2 || h_vis.shape() != h_sum.shape()) {
    throw ConfigError("loss_tco: h_vis and h_sum must both be [B, d]");
  }
  if (!(tau > 0.0)) throw ConfigError("loss_tco: tau must be positive");
  const std::size_t batch = h_vis.dim(0);
  const Tensor<T> sims = ad::scale(ad::matmul(ad::l2_normalize(h_vis), ad::l2_normalize(h_sum), true),
                                   static_cast<T>(1.0 / tau));
  std::vector<std::int32_t> diagonal(batch);
  std::iota(diagonal.begin(), diagonal.end(), 0);
  const Tensor<T> positives = ad::pick(ad::log_softmax(sims, 1), std::span<const std::int32_t>(diagonal));
  return ad::scale(ad::mean_all(positives), T(-1));
}

template <typename T>
Tensor<T> loss_student(const ForwardTrace<T>& student, const ForwardTrace<T>& teacher,
                       std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask, double alpha,
                       const KdOptions& options, const Projection<T>& head) {
  const Tensor<T> ce = loss_ce(student.decoder.logits, targets, mask, options.smoothing);
  const Tensor<T> kd = kd_distance(teacher.decoder.top(), student.decoder.top(), mask, options.mode, head);
  return ad::add(ce, ad::scale(kd, static_cast<T>(alpha)));
}

template <typename T>
Tensor<T> loss_teacher(const ForwardTrace<T>& teacher, const ForwardTrace<T>& student,
                       std::span<const std::int32_t> targets, std::span<const std::uint8_t> mask, double alpha,
                       const KdOptions& options, const Projection<T>& head) {
  const Tensor<T> ce = loss_ce(teacher.decoder.logits, targets, mask, options.smoothing);
  const Tensor<T> kd = kd_distance(student.decoder.top(), teacher.decoder.top(), mask, options.mode, head);
  return ad::add(ce, ad::scale(kd, static_cast<T>(1.0 - alpha)));
}

template <typename T>
JointLoss<T> joint_step_loss(const JointInputs<T>& in, double alpha, double beta, double tau,
                             const KdOptions& options, const Projection<T>& head) {
  if (in.student == nullptr || in.teacher == nullptr) throw ConfigError("joint_step_loss: missing trace");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("joint_step_loss: alpha must lie in [0, 1]");
  if (beta < 0.0) throw ConfigError("joint_step_loss: beta must be non-negative");
  const auto& s = in.student->decoder;
  const auto& t = in.teacher->decoder;
  if (s.logits.shape() != t.logits.shape()) {
    throw ContractViolation("joint_step_loss: student and teacher decoded different target lengths");
  }

  const Tensor<T> ce_s = loss_ce(s.logits, in.targets, in.target_mask, options.smoothing);
  const Tensor<T> kd_ts = kd_distance(t.top(), s.top(), in.target_mask, options.mode, head);
  const Tensor<T> ce_t = loss_ce(t.logits, in.targets, in.target_mask, options.smoothing);
  const Tensor<T> kd_st = kd_distance(s.top(), t.top(), in.target_mask, options.mode, head);

  const Tensor<T> student_loss = ad::add(ce_s, ad::scale(kd_ts, static_cast<T>(alpha)));
  const Tensor<T> teacher_loss = ad::add(ce_t, ad::scale(kd_st, static_cast<T>(1.0 - alpha)));
  Tensor<T> joint = ad::add(student_loss, teacher_loss);

  JointLoss<T> out;
  LossBundle& v = out.values;
  if (in.h_vis.defined() && in.h_sum.defined()) {
    const Tensor<T> tco = loss_tco(in.h_vis, in.h_sum, tau);
    v.l_tco = static_cast<double>(tco.item());
    if (beta != 0.0) joint = ad::add(joint, ad::scale(tco, static_cast<T>(beta)));
  } else if (beta != 0.0) {
    throw ConfigError("joint_step_loss: beta > 0 needs pooled vision and summary vectors");
  }

  out.joint = joint;
  v.l_mxls = static_cast<double>(ce_s.item());
  v.l_mms = static_cast<double>(ce_t.item());
  v.l_kd_ts = static_cast<double>(kd_ts.item());
  v.l_kd_st = static_cast<double>(kd_st.item());
  v.l_student = static_cast<double>(student_loss.item());
  v.l_teacher = static_cast<double>(teacher_loss.item());
  v.alpha = alpha;
  v.beta = beta;
  v.tau = tau;
  v.joint = static_cast<double>(joint.item());
  v.batch = s.logits.dim(0);
  return out;
}

#define M3S_INSTANTIATE_OBJECTIVES(T)                                                                              \
  template Tensor<T> loss_ce(const Tensor<T>&, std::span<const std::int32_t>, std::span<const std::uint8_t>,      \
                             double);                                                                             \
  template Tensor<T> kd_distance(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>, KdMode,       \
                                 const Projection<T>&);                                                           \
  template Tensor<T> pool_masked(const Tensor<T>&, std::span<const std::uint8_t>);                                \
  template void init_tco_params(const ModelConfig&, ParamStore<T>&, std::uint64_t);                               \
  template Tensor<T> project_vision(const ParamStore<T>&, const Tensor<T>&);                                      \
  template Tensor<T> loss_tco(const Tensor<T>&, const Tensor<T>&, double);                                        \
  template Tensor<T> loss_student(const ForwardTrace<T>&, const ForwardTrace<T>&, std::span<const std::int32_t>,  \
                                  std::span<const std::uint8_t>, double, const KdOptions&, const Projection<T>&); \
  template Tensor<T> loss_teacher(const ForwardTrace<T>&, const ForwardTrace<T>&, std::span<const std::int32_t>,  \
                                  std::span<const std::uint8_t>, double, const KdOptions&, const Projection<T>&); \
  template JointLoss<T> joint_step_loss(const JointInputs<T>&, double, double, double, const KdOptions&,          \
                                        const Projection<T>&);

M3S_INSTANTIATE_OBJECTIVES(float)
M3S_INSTANTIATE_OBJECTIVES(double)

}  // namespace m3s::objectives
