// Copyright 2026 The lagmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dreamer and encoder losses. Each of the four Dreamer terms is built on
// its own graph and differentiated with its own backward pass, so a term's
// gradient can only reach its own module.

#include <array>
#include <cmath>
#include <map>

#include "lagmpc/dreamer/heads.hpp"
#include "lagmpc/train/trainer.hpp"

namespace lagmpc::train {

using dreamer::DreamerHeads;
using dreamer::Encoder;

enum DreamerTerm { kDynamicsTerm = 0, kRewardTerm = 1, kCriticTerm = 2, kPolicyTerm = 3 };
inline const std::array<const char*, 4> kDreamerTermNames{"dynamics", "reward", "critic", "policy"};

/// Everything a Dreamer term reads for a set of records.
struct HeadBatch {
  Matrix Z, U, Expert;
  Matrix reward, value;  // 1 x B
  Index size() const { return Z.cols(); }
};

inline HeadBatch make_head_batch(const zoo::Transitions& tr, const std::vector<Index>& idx) {
  return {zoo::take_cols(tr.Z, idx), zoo::take_cols(tr.U, idx), zoo::take_cols(tr.Expert, idx),
          tr.reward(idx).transpose(), tr.value(idx).transpose()};
}

template <class Ops>
typename Ops::Var policy_loss_vars(const Ops& ops, const diffnet::BoundMlp<Ops>& pol, const HeadBatch& b) {
  auto pred = diffnet::apply_mlp(ops, pol, ops.constant(b.Z)).value;
  return zoo::scaled_squared_error(ops, pred, b.Expert, pol.net->output_scale().cwiseInverse());
}

template <class Ops>
typename Ops::Var reward_loss_vars(const Ops& ops, const diffnet::BoundMlp<Ops>& rew, const HeadBatch& b) {
  Matrix X(b.Z.rows() + b.U.rows(), b.size());
  X << b.Z, b.U;
  auto pred = diffnet::apply_mlp(ops, rew, ops.constant(X)).value;
  return zoo::scaled_squared_error(ops, pred, b.reward, rew.net->output_scale().cwiseInverse());
}

template <class Ops>
typename Ops::Var value_loss_vars(const Ops& ops, const diffnet::BoundMlp<Ops>& val, const HeadBatch& b) {
  auto pred = diffnet::apply_mlp(ops, val, ops.constant(b.Z)).value;
  return zoo::scaled_squared_error(ops, pred, b.value, val.net->output_scale().cwiseInverse());
}

using HeadLossFn = diffnet::Graph::Var (*)(const diffnet::GraphOps&, const diffnet::BoundMlp<diffnet::GraphOps>&,
                                           const HeadBatch&);

inline zoo::LossGrad head_loss_grad(const diffnet::Mlp& net, const HeadBatch& b, HeadLossFn fn) {
  diffnet::Graph graph;
  diffnet::GraphOps ops{&graph};
  auto bound = diffnet::bind(ops, net);
  auto loss = fn(ops, bound, b);
  graph.backward(loss);
  return {graph.value(loss)(0, 0), diffnet::gradient_of(graph, bound).flat()};
}

/// The four Dreamer terms and their per-module gradients.
struct DreamerLoss {
  std::array<double, 4> value{};
  std::array<Vector, 4> grad;
};

inline DreamerLoss dreamer_loss(const zoo::DynamicsModelHandle& dynamics, const DreamerHeads& heads,
                                const zoo::Transitions& tr, const std::vector<Index>& idx) {
  require(!idx.empty(), ErrorKind::kInvalidArg, "dreamer_loss on an empty batch");
  DreamerLoss out;
  const zoo::LossGrad d = zoo::dynamics_loss_grad(dynamics, zoo::make_batch(dynamics, tr, idx));
  const HeadBatch b = make_head_batch(tr, idx);
  const zoo::LossGrad r = head_loss_grad(heads.reward, b, &reward_loss_vars<diffnet::GraphOps>);
  const zoo::LossGrad v = head_loss_grad(heads.value, b, &value_loss_vars<diffnet::GraphOps>);
  const zoo::LossGrad p = head_loss_grad(heads.policy, b, &policy_loss_vars<diffnet::GraphOps>);
  out.value = {d.loss, r.loss, v.loss, p.loss};
  out.grad = {d.grad, r.grad, v.grad, p.grad};
  return out;
}

namespace detail {

inline Objective head_objective(diffnet::Mlp& net, const zoo::Transitions& tr, const std::string& term,
                                HeadLossFn graph_fn,
                                typename diffnet::EigenOps::Var (*eigen_fn)(const diffnet::EigenOps&,
                                                                            const diffnet::BoundMlp<diffnet::EigenOps>&,
                                                                            const HeadBatch&)) {
  Objective obj;
  obj.term = term;
  obj.samples = all_indices(tr.size());
  obj.get_params = [&net] { return net.flat_parameters(); };
  obj.set_params = [&net](const Vector& p) { net.set_flat_parameters(p); };
  obj.loss_grad = [&net, &tr, graph_fn](const std::vector<Index>& idx) {
    return head_loss_grad(net, make_head_batch(tr, idx), graph_fn);
  };
  obj.loss = [&net, &tr, eigen_fn](const std::vector<Index>& idx) {
    diffnet::EigenOps ops;
    return eigen_fn(ops, diffnet::bind(ops, net), make_head_batch(tr, idx))(0, 0);
  };
  return obj;
}

}  // namespace detail

/// Records whose value target is close to the infinite-horizon return. Near
/// the end of an episode the target is cut short, so it depends on time as
/// well as state and a state-only critic cannot fit it. Keeps records with
/// gamma^(steps left) <= tail; all records if none qualify.
inline std::vector<Index> critic_indices(const zoo::Transitions& tr, double tail) {
  std::map<int, int> last_t;
  for (Index i = 0; i < tr.size(); ++i) {
    auto [it, fresh] = last_t.try_emplace(tr.episode[i], tr.t[i]);
    if (!fresh) it->second = std::max(it->second, tr.t[i]);
  }
  std::vector<Index> idx;
  for (Index i = 0; i < tr.size(); ++i) {
    const int left = last_t[tr.episode[i]] - tr.t[i] + 1;
    if (std::pow(tr.gamma, left) <= tail) idx.push_back(i);
  }
  return idx.empty() ? all_indices(tr.size()) : idx;
}

/// Trains reward, critic and policy heads, one objective at a time.
inline LossReport train_heads(DreamerHeads& heads, const zoo::Transitions& tr, const TrainConfig& cfg) {
  heads.fit_normalization(tr);
  LossReport report;
  auto r = detail::head_objective(heads.reward, tr, "reward", &reward_loss_vars<diffnet::GraphOps>,
                                  &reward_loss_vars<diffnet::EigenOps>);
  report.append(fit(r, cfg));
  auto v = detail::head_objective(heads.value, tr, "critic", &value_loss_vars<diffnet::GraphOps>,
                                  &value_loss_vars<diffnet::EigenOps>);
  v.samples = critic_indices(tr, cfg.critic_tail);
  report.append(fit(v, cfg));
  auto p = detail::head_objective(heads.policy, tr, "policy", &policy_loss_vars<diffnet::GraphOps>,
                                  &policy_loss_vars<diffnet::EigenOps>);
  report.append(fit(p, cfg));
  return report;
}

// ---- encoder ----

template <class Ops>
typename Ops::Var encoder_loss_vars(const Ops& ops, const Encoder& enc, const diffnet::BoundMlp<Ops>& bound,
                                    const Matrix& Obs, const Matrix& Z) {
  auto pred = diffnet::apply_mlp(ops, bound, ops.constant(enc.features(Obs))).value;
  return zoo::scaled_squared_error(ops, pred, Z, enc.target_inv_scale());
}

/// Normalized squared error of the encoder against ground-truth states.
inline double encoder_loss(const Encoder& enc, const Matrix& Obs, const Matrix& Z) {
  require(Obs.cols() >= 1 && Obs.cols() == Z.cols(), ErrorKind::kInvalidArg, "encoder_loss needs matching batches");
  diffnet::EigenOps ops;
  return encoder_loss_vars(ops, enc, diffnet::bind(ops, enc.net), Obs, Z)(0, 0);
}

// Records whose history window is complete; the rest are skipped.
inline std::vector<Index> complete_history(const zoo::Transitions& tr) {
  std::vector<Index> idx;
  for (Index i = 0; i < tr.size(); ++i)
    if (tr.history_complete[i]) idx.push_back(i);
  return idx;
}

inline LossReport train_encoder(Encoder& enc, const zoo::Transitions& tr, const TrainConfig& cfg) {
  const std::vector<Index> usable = complete_history(tr);
  require(!usable.empty(), ErrorKind::kInvalidArg, "no records with a complete observation history");
  enc.fit_normalization(zoo::take_cols(tr.Obs, usable), zoo::take_cols(tr.Z, usable));
  Objective obj;
  obj.term = "encoder";
  obj.samples = usable;
  obj.get_params = [&] { return enc.net.flat_parameters(); };
  obj.set_params = [&](const Vector& p) { enc.net.set_flat_parameters(p); };
  obj.loss_grad = [&](const std::vector<Index>& idx) {
    diffnet::Graph graph;
    diffnet::GraphOps ops{&graph};
    auto bound = diffnet::bind(ops, enc.net);
    auto loss = encoder_loss_vars(ops, enc, bound, zoo::take_cols(tr.Obs, idx), zoo::take_cols(tr.Z, idx));
    graph.backward(loss);
    return zoo::LossGrad{graph.value(loss)(0, 0), diffnet::gradient_of(graph, bound).flat()};
  };
  obj.loss = [&](const std::vector<Index>& idx) {
    return encoder_loss(enc, zoo::take_cols(tr.Obs, idx), zoo::take_cols(tr.Z, idx));
  };
  LossReport report = fit(obj, cfg);
  report.skipped_records = tr.size() - static_cast<Index>(usable.size());
  return report;
}

}  // namespace lagmpc::train
