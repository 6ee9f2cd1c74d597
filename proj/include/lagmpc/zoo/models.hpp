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

// Dynamics model variants behind one handle: the unstructured ONN, the
// full and diagonal Lagrangian models, the inverse-trained Lagrangian model
// and the reduced CoM Lagrangian model.

#include <cmath>
#include <numeric>
#include <string>

#include "lagmpc/lnn/model.hpp"
#include "lagmpc/train/optim.hpp"
#include "lagmpc/zoo/transitions.hpp"

namespace lagmpc::zoo {

using lnn::LnnModel;
using train::Normalizer;

enum class Variant { kOnn, kLnnFull, kLnnDiag, kLnnInverse, kComLnn };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kOnn: return "onn";
    case Variant::kLnnFull: return "lnn_full";
    case Variant::kLnnDiag: return "lnn_diag";
    case Variant::kLnnInverse: return "lnn_inverse_trained";
    case Variant::kComLnn: return "com_lnn";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::kOnn, Variant::kLnnFull, Variant::kLnnDiag, Variant::kLnnInverse, Variant::kComLnn})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::kConfig,
              "unknown variant '" + s + "' (onn|lnn_full|lnn_diag|lnn_inverse_trained|com_lnn)");
}

struct ModelConfig {
  std::vector<Index> hidden{256, 256};
  double eps = 1e-4;
  bool half_step = false;
  bool use_external = true;
  bool onn_residual = true;   // ONN predicts z + net(z, a)
  bool onn_match_params = true;  // size the ONN to the Lagrangian model's parameter count
  bool fd_targets = false;    // inverse loss on finite-difference accelerations
};

/// Unstructured next-state predictor.
struct OnnModel {
  diffnet::Mlp net;
  bool residual = true;

  Index state_dim() const { return net.output_dim(); }

  Matrix predict_batch(const Matrix& Z, const Matrix& U) const {
    require_dim(Z.rows(), state_dim(), "onn state");
    require_dim(Z.rows() + U.rows(), net.input_dim(), "onn input");
    Matrix X(Z.rows() + U.rows(), Z.cols());
    X << Z, U;
    Matrix out = net.forward_batch(X);
    if (residual) out += Z;
    return out;
  }
  Vector predict(const Vector& z, const Vector& a) const { return predict_batch(z, a).col(0); }
};

// Hidden width w (two equal layers) whose parameter count is closest to
// target: w^2 + (in + out + 2) w + out.
inline Index matched_width(Index target, Index in, Index out) {
  const double b = static_cast<double>(in + out + 2);
  const double w = (-b + std::sqrt(b * b + 4.0 * static_cast<double>(target - out))) / 2.0;
  Index best = std::max<Index>(1, static_cast<Index>(std::floor(w)));
  auto count = [&](Index x) { return x * x + (in + out + 2) * x + out; };
  if (std::abs(count(best + 1) - target) < std::abs(count(best) - target)) ++best;
  return best;
}

/// One dynamics model of any variant, with its state normalization. The
/// model state is the full [q; qdot] except for com_lnn, which works on the
/// reduced CoM state.
class DynamicsModelHandle {
 public:
  Variant variant = Variant::kLnnDiag;
  sim::SystemSpec spec;
  Normalizer state_norm;
  OnnModel onn;
  LnnModel lnn;
  bool fd_targets = false;

  DynamicsModelHandle() = default;

  static DynamicsModelHandle create(Variant v, const sim::SystemSpec& spec, const ModelConfig& cfg,
                                    std::uint64_t seed) {
    DynamicsModelHandle h;
    h.variant = v;
    h.spec = spec;
    h.fd_targets = cfg.fd_targets;
    lnn::LnnConfig lc;
    lc.dof = spec.n;
    lc.actuation = spec.B;
    lc.eps = cfg.eps;
    lc.dt = spec.dt;
    lc.half_step = cfg.half_step;
    lc.hidden = cfg.hidden;
    lc.mass_structure = v == Variant::kLnnDiag ? lnn::MassStructure::kDiagonal : lnn::MassStructure::kFullCholesky;
    if (v == Variant::kComLnn) {
      lc.dof = sim::com_dof(spec);
      lc.actuation = sim::com_actuation(spec);
    }
    if (v == Variant::kOnn) {
      const Index in = 2 * spec.n + spec.m, out = 2 * spec.n;
      std::vector<Index> hidden = cfg.hidden;
      if (cfg.onn_match_params) {
        // Match the diagonal Lagrangian model built from the same widths.
        lc.mass_structure = lnn::MassStructure::kDiagonal;
        const LnnModel reference(lc, seed);
        hidden = {matched_width(reference.parameter_count(), in, out),
                  matched_width(reference.parameter_count(), in, out)};
      }
      h.onn.net = diffnet::init_mlp(diffnet::mlp_sizes(in, hidden, out), stream_seed(seed, 4));
      h.onn.residual = cfg.onn_residual;
    } else {
      h.lnn = LnnModel(lc, seed);
      h.lnn.use_external = cfg.use_external;
    }
    h.state_norm = Normalizer::identity(h.state_dim());
    return h;
  }

  bool is_lagrangian() const { return variant != Variant::kOnn; }
  bool uses_com() const { return variant == Variant::kComLnn; }
  Index state_dim() const { return uses_com() ? 2 * sim::com_dof(spec) : 2 * spec.n; }
  std::vector<bool> angular() const {
    if (uses_com()) return com_angular(spec);
    return spec.angular;
  }

  Index parameter_count() const {
    return is_lagrangian() ? lnn.parameter_count() : onn.net.parameter_count();
  }
  Vector flat_parameters() const { return is_lagrangian() ? lnn.flat_parameters() : onn.net.flat_parameters(); }
  void set_flat_parameters(const Eigen::Ref<const Vector>& p) {
    if (is_lagrangian())
      lnn.set_flat_parameters(p);
    else
      onn.net.set_flat_parameters(p);
  }

  // Model-space states of a transition set.
  const Matrix& states(const Transitions& tr) const { return uses_com() ? tr.C : tr.Z; }
  const Matrix& next_states(const Transitions& tr) const { return uses_com() ? tr.Cnext : tr.Znext; }

  // Full state to model state.
  Vector reduce(const Vector& z) const {
    if (!uses_com()) return sim::canonical_state(spec, z);
    return sim::com_reduce(spec, lnn::GeneralizedState::from_stacked(sim::canonical_state(spec, z)));
  }

  /// Sets the state normalizer and the networks' fixed input and output
  /// normalization from training data.
  void fit_normalization(const Transitions& tr) {
    const Matrix& S = states(tr);
    state_norm = Normalizer::fit(S);
    if (!is_lagrangian()) {
      const Index dz = S.rows(), m = spec.m;
      Vector shift(dz + m), scale(dz + m);
      shift << state_norm.mean, Vector::Zero(m);
      scale << state_norm.inv_std(), spec.torque_limit.cwiseInverse();
      onn.net.set_input_normalization(shift, scale);
      const Normalizer out = Normalizer::fit(onn.residual ? Matrix(next_states(tr) - S) : next_states(tr));
      onn.net.set_output_affine(out.mean, out.stddev);
      return;
    }
    const Index n = lnn.dof();
    const Vector q_shift = state_norm.mean.head(n), q_scale = state_norm.inv_std().head(n);
    lnn.chol_net.set_input_normalization(q_shift, q_scale);
    lnn.pot_net.set_input_normalization(q_shift, q_scale);
    lnn.ext_net.set_input_normalization(state_norm.mean, state_norm.inv_std());
  }

  /// One step for a batch of model states. Revolute coordinates of the
  /// result are wrapped.
  Matrix step_batch(const Matrix& S, const Matrix& U) const {
    require_dim(S.rows(), state_dim(), "model state");
    Matrix out(S.rows(), S.cols());
    if (!is_lagrangian()) {
      out = onn.predict_batch(S, U);
    } else {
      const Index n = lnn.dof();
      auto [q, qd] = lnn::step_batch(lnn, S.topRows(n), S.bottomRows(n), U);
      out << q, qd;
    }
    wrap_rows(out, angular());
    return out;
  }

  /// Open-loop rollout: column k of the result is the state after k steps
  /// under actions.col(0..k-1).
  Matrix rollout(const Vector& s0, const Matrix& actions) const {
    require_dim(actions.rows(), spec.m, "rollout actions");
    Matrix traj(state_dim(), actions.cols() + 1);
    traj.col(0) = s0;
    for (Index k = 0; k < actions.cols(); ++k) traj.col(k + 1) = step_batch(traj.col(k), actions.col(k));
    return traj;
  }

  void save_to(diffnet::Checkpoint& ck, const std::string& prefix = "model") const {
    ck.set_meta(prefix + ".variant", to_string(variant));
    ck.set_meta(prefix + ".system", spec.name);
    ck.set_meta(prefix + ".fd_targets", fd_targets ? "1" : "0");
    state_norm.save_to(ck, prefix + "/state_norm");
    if (is_lagrangian()) {
      lnn.save_to(ck, prefix + "/");
    } else {
      ck.put_mlp(prefix + "/onn", onn.net);
      ck.set_meta(prefix + ".onn_residual", onn.residual ? "1" : "0");
    }
  }

  static DynamicsModelHandle load_from(const diffnet::Checkpoint& ck, const sim::SystemSpec& spec,
                                       const std::string& prefix = "model") {
    DynamicsModelHandle h;
    h.variant = variant_from_string(ck.meta(prefix + ".variant"));
    require(ck.meta(prefix + ".system") == spec.name, ErrorKind::kConfig,
            "checkpoint was trained on " + ck.meta(prefix + ".system") + ", not " + spec.name);
    h.spec = spec;
    h.fd_targets = ck.meta(prefix + ".fd_targets") == "1";
    h.state_norm = Normalizer::load_from(ck, prefix + "/state_norm");
    if (h.is_lagrangian()) {
      h.lnn = LnnModel::load_from(ck, prefix + "/");
    } else {
      h.onn.net = ck.get_mlp(prefix + "/onn");
      h.onn.residual = ck.meta(prefix + ".onn_residual") == "1";
    }
    return h;
  }
};

// ---- losses ----

/// A minibatch in model space. Qdd is only read by the inverse loss.
struct DynamicsBatch {
  Matrix S, U, Snext, Qdd;
  Index size() const { return S.cols(); }
};

inline DynamicsBatch make_batch(const DynamicsModelHandle& h, const Transitions& tr, const std::vector<Index>& idx) {
  DynamicsBatch b{take_cols(h.states(tr), idx), take_cols(tr.U, idx), take_cols(h.next_states(tr), idx), {}};
  if (h.variant == Variant::kLnnInverse) b.Qdd = take_cols(h.fd_targets ? tr.QddFd : tr.Qdd, idx);
  return b;
}

inline DynamicsBatch full_batch(const DynamicsModelHandle& h, const Transitions& tr) {
  std::vector<Index> idx(tr.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  return make_batch(h, tr, idx);
}

// (1/B) sum over batch and dimensions of ((pred - target) * inv_scale)^2.
template <class Ops>
typename Ops::Var scaled_squared_error(const Ops& ops, const typename Ops::Var& pred, const Matrix& target,
                                       const Vector& inv_scale) {
  auto diff = ops.scale_rows_const(ops.sub(pred, ops.constant(target)), inv_scale);
  return ops.scale(ops.sum_all(ops.square(diff)), 1.0 / static_cast<double>(target.cols()));
}

template <class Ops>
typename Ops::Var onn_predict_vars(const Ops& ops, const diffnet::BoundMlp<Ops>& net, bool residual,
                                   const typename Ops::Var& Z, const typename Ops::Var& U) {
  auto out = diffnet::apply_mlp(ops, net, ops.vstack({Z, U})).value;
  return residual ? ops.add(Z, out) : out;
}

// Next-state prediction of a Lagrangian model through the discrete update.
template <class Ops>
typename Ops::Var lnn_predict_vars(const Ops& ops, const lnn::BoundLnn<Ops>& bound, const Matrix& S,
                                   const Matrix& U) {
  const LnnModel& m = *bound.model;
  const Index n = m.dof();
  auto Q = ops.constant(S.topRows(n)), Qd = ops.constant(S.bottomRows(n));
  auto terms = lnn::lagrangian_terms(ops, bound, Q, Qd);
  auto qdd = lnn::forward_dynamics_vars(ops, terms, m.actuation(), ops.constant(U));
  auto [qn, qdn] = lnn::euler_update(ops, Q, Qd, qdd, m.dt(), m.half_step());
  return ops.vstack({qn, qdn});
}

// Mean over the batch of |tau_act - u|^2 + |tau_root|^2 from the inverse map.
template <class Ops>
typename Ops::Var lnn_inverse_loss_vars(const Ops& ops, const lnn::BoundLnn<Ops>& bound, const Matrix& S,
                                        const Matrix& U, const Matrix& Qdd) {
  const LnnModel& m = *bound.model;
  const Index n = m.dof();
  auto terms = lnn::lagrangian_terms(ops, bound, ops.constant(S.topRows(n)), ops.constant(S.bottomRows(n)));
  auto tau = lnn::inverse_dynamics_vars(ops, terms, ops.constant(Qdd));
  const auto split = lnn::actuation_split(m.actuation());
  Matrix Sa = Matrix::Zero(split.actuated_rows.size(), n);
  for (std::size_t i = 0; i < split.actuated_rows.size(); ++i) Sa(i, split.actuated_rows[i]) = 1.0;
  const double inv_b = 1.0 / static_cast<double>(S.cols());
  auto act = ops.sub(ops.matmul_const(Sa, tau), ops.constant(U));
  auto loss = ops.scale(ops.sum_all(ops.square(act)), inv_b);
  if (!split.unactuated_rows.empty()) {
    Matrix Su = Matrix::Zero(split.unactuated_rows.size(), n);
    for (std::size_t i = 0; i < split.unactuated_rows.size(); ++i) Su(i, split.unactuated_rows[i]) = 1.0;
    loss = ops.add(loss, ops.scale(ops.sum_all(ops.square(ops.matmul_const(Su, tau))), inv_b));
  }
  return loss;
}

template <class Ops>
typename Ops::Var dynamics_loss_vars(const Ops& ops, const DynamicsModelHandle& h,
                                     const diffnet::BoundMlp<Ops>* onn_bound, const lnn::BoundLnn<Ops>* lnn_bound,
                                     const DynamicsBatch& b) {
  require(b.size() >= 1, ErrorKind::kInvalidArg, "loss on an empty batch");
  const Vector inv = h.state_norm.inv_std();
  switch (h.variant) {
    case Variant::kOnn:
      return scaled_squared_error(
          ops, onn_predict_vars(ops, *onn_bound, h.onn.residual, ops.constant(b.S), ops.constant(b.U)), b.Snext,
          inv);
    case Variant::kLnnInverse:
      return lnn_inverse_loss_vars(ops, *lnn_bound, b.S, b.U, b.Qdd);
    default:
      return scaled_squared_error(ops, lnn_predict_vars(ops, *lnn_bound, b.S, b.U), b.Snext, inv);
  }
}

/// The variant's training loss on a batch (no gradient).
inline double dynamics_loss(const DynamicsModelHandle& h, const DynamicsBatch& b) {
  diffnet::EigenOps ops;
  if (h.is_lagrangian()) {
    auto bound = lnn::bind_lnn(ops, h.lnn);
    return dynamics_loss_vars<diffnet::EigenOps>(ops, h, nullptr, &bound, b)(0, 0);
  }
  auto bound = diffnet::bind(ops, h.onn.net);
  return dynamics_loss_vars<diffnet::EigenOps>(ops, h, &bound, nullptr, b)(0, 0);
}

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Loss and its exact gradient with respect to the model's flat parameters.
inline LossGrad dynamics_loss_grad(const DynamicsModelHandle& h, const DynamicsBatch& b) {
  diffnet::Graph graph;
  diffnet::GraphOps ops{&graph};
  LossGrad out;
  if (h.is_lagrangian()) {
    auto bound = lnn::bind_lnn(ops, h.lnn);
    auto loss = dynamics_loss_vars<diffnet::GraphOps>(ops, h, nullptr, &bound, b);
    graph.backward(loss);
    out.loss = graph.value(loss)(0, 0);
    out.grad.resize(h.parameter_count());
    out.grad << diffnet::gradient_of(graph, bound.chol).flat(), diffnet::gradient_of(graph, bound.pot).flat(),
        diffnet::gradient_of(graph, bound.ext).flat();
  } else {
    auto bound = diffnet::bind(ops, h.onn.net);
    auto loss = dynamics_loss_vars<diffnet::GraphOps>(ops, h, &bound, nullptr, b);
    graph.backward(loss);
    out.loss = graph.value(loss)(0, 0);
    out.grad = diffnet::gradient_of(graph, bound).flat();
  }
  return out;
}

// Named entry points.

inline double onn_loss(const DynamicsModelHandle& h, const DynamicsBatch& b) {
  require(h.variant == Variant::kOnn, ErrorKind::kInvalidArg, "onn_loss needs an onn model");
  return dynamics_loss(h, b);
}

inline double lnn_inverse_loss(const DynamicsModelHandle& h, const DynamicsBatch& b) {
  require(h.is_lagrangian() && !h.uses_com(), ErrorKind::kInvalidArg, "lnn_inverse_loss needs a Lagrangian model");
  require(b.Qdd.cols() == b.size(), ErrorKind::kInvalidArg, "lnn_inverse_loss needs acceleration targets");
  diffnet::EigenOps ops;
  auto bound = lnn::bind_lnn(ops, h.lnn);
  return lnn_inverse_loss_vars(ops, bound, b.S, b.U, b.Qdd)(0, 0);
}

inline double com_lnn_loss(const DynamicsModelHandle& h, const DynamicsBatch& b) {
  require(h.variant == Variant::kComLnn, ErrorKind::kUnsupported, "com_lnn_loss needs a com_lnn model");
  return dynamics_loss(h, b);
}

inline Vector com_lnn_predict(const DynamicsModelHandle& h, const Vector& c, const Vector& u) {
  require(h.variant == Variant::kComLnn, ErrorKind::kUnsupported, "com_lnn_predict needs a com_lnn model");
  return h.step_batch(c, u).col(0);
}

}  // namespace lagmpc::zoo
