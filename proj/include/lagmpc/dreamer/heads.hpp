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

// Full-state encoder and the policy / reward / value heads.

#include <string>
#include <vector>

#include "lagmpc/diffnet/checkpoint.hpp"
#include "lagmpc/sim/systems.hpp"
#include "lagmpc/train/optim.hpp"
#include "lagmpc/zoo/transitions.hpp"

namespace lagmpc::dreamer {

using diffnet::Mlp;
using train::Normalizer;

/// Estimates [q; qdot] from a window of observations. Before the network,
/// each older revolute position is re-expressed relative to the newest one
/// (newest + wrap(older - newest)), which removes the +-pi seam from the
/// window; everything else passes through unchanged.
class Encoder {
 public:
  Mlp net;
  sim::SystemSpec spec;
  Index history = 5;

  Encoder() = default;
  Encoder(const sim::SystemSpec& s, Index hist, const std::vector<Index>& hidden, std::uint64_t seed)
      : spec(s), history(hist) {
    require(hist >= 1, ErrorKind::kInvalidArg, "encoder history must be >= 1");
    net = diffnet::init_mlp(diffnet::mlp_sizes(input_dim(), hidden, 2 * s.n), stream_seed(seed, 5));
  }

  Index input_dim() const { return sim::observation_dim(spec) * history; }

  Matrix features(const Matrix& Obs) const {
    require_dim(Obs.rows(), input_dim(), "observation history");
    const Index p = sim::observation_dim(spec);
    Matrix F = Obs;
    const Index newest = (history - 1) * p;
    for (Index c = 0; c < Obs.cols(); ++c)
      for (Index k = 0; k + 1 < history; ++k)
        for (Index i = 0; i < spec.n; ++i)
          if (spec.angular[i])
            F(k * p + i, c) = Obs(newest + i, c) + wrap_angle(Obs(k * p + i, c) - Obs(newest + i, c));
    return F;
  }

  Matrix encode_batch(const Matrix& Obs) const {
    Matrix Z = net.forward_batch(features(Obs));
    zoo::wrap_rows(Z, spec.angular);
    return Z;
  }
  Vector encode(const Vector& history_obs) const { return encode_batch(history_obs).col(0); }

  /// Input and output normalization from training data.
  void fit_normalization(const Matrix& Obs, const Matrix& Z) {
    const Normalizer in = Normalizer::fit(features(Obs));
    net.set_input_normalization(in.mean, in.inv_std());
    const Normalizer out = Normalizer::fit(Z);
    net.set_output_affine(out.mean, out.stddev);
  }
  Vector target_inv_scale() const { return net.output_scale().cwiseInverse(); }

  void save_to(diffnet::Checkpoint& ck) const {
    ck.put_mlp("encoder", net);
    ck.set_meta("encoder.history", std::to_string(history));
  }
  static Encoder load_from(const diffnet::Checkpoint& ck, const sim::SystemSpec& s) {
    Encoder e;
    e.spec = s;
    e.net = ck.get_mlp("encoder");
    e.history = std::stol(ck.meta("encoder.history"));
    require_dim(e.net.input_dim(), e.input_dim(), "encoder input");
    return e;
  }
};

/// Policy pi(z), reward r(z, u) and value V(z) on canonical full states.
struct DreamerHeads {
  Mlp policy;
  Mlp reward;
  Mlp value;
  sim::SystemSpec spec;

  DreamerHeads() = default;
  DreamerHeads(const sim::SystemSpec& s, const std::vector<Index>& hidden, std::uint64_t seed) : spec(s) {
    const Index dz = 2 * s.n;
    policy = diffnet::init_mlp(diffnet::mlp_sizes(dz, hidden, s.m), stream_seed(seed, 6));
    reward = diffnet::init_mlp(diffnet::mlp_sizes(dz + s.m, hidden, 1), stream_seed(seed, 7));
    value = diffnet::init_mlp(diffnet::mlp_sizes(dz, hidden, 1), stream_seed(seed, 8));
    policy.set_output_affine(Vector::Zero(s.m), s.torque_limit);
  }

  Matrix canonical(const Matrix& Z) const {
    Matrix C = Z;
    zoo::wrap_rows(C, spec.angular);
    return C;
  }

  Matrix policy_batch(const Matrix& Z) const { return policy.forward_batch(canonical(Z)); }
  Matrix reward_batch(const Matrix& Z, const Matrix& U) const {
    Matrix X(Z.rows() + U.rows(), Z.cols());
    X << canonical(Z), U;
    return reward.forward_batch(X);
  }
  Matrix value_batch(const Matrix& Z) const { return value.forward_batch(canonical(Z)); }

  Vector act(const Vector& z) const { return policy_batch(z).col(0); }

  /// Input normalization from training states; output scales from the
  /// reward and value targets. The policy output is scaled by the torque
  /// limits.
  void fit_normalization(const zoo::Transitions& tr) {
    const Normalizer zn = Normalizer::fit(tr.Z);
    policy.set_input_normalization(zn.mean, zn.inv_std());
    value.set_input_normalization(zn.mean, zn.inv_std());
    Vector shift(zn.dim() + spec.m), scale(zn.dim() + spec.m);
    shift << zn.mean, Vector::Zero(spec.m);
    scale << zn.inv_std(), spec.torque_limit.cwiseInverse();
    reward.set_input_normalization(shift, scale);
    const Normalizer rn = Normalizer::fit(tr.reward.transpose());
    reward.set_output_affine(rn.mean, rn.stddev);
    const Normalizer vn = Normalizer::fit(tr.value.transpose());
    value.set_output_affine(vn.mean, vn.stddev);
  }

  void save_to(diffnet::Checkpoint& ck) const {
    ck.put_mlp("policy", policy);
    ck.put_mlp("reward", reward);
    ck.put_mlp("value", value);
  }
  static DreamerHeads load_from(const diffnet::Checkpoint& ck, const sim::SystemSpec& s) {
    DreamerHeads h;
    h.spec = s;
    h.policy = ck.get_mlp("policy");
    h.reward = ck.get_mlp("reward");
    h.value = ck.get_mlp("value");
    require_dim(h.policy.input_dim(), 2 * s.n, "policy input");
    return h;
  }
};

}  // namespace lagmpc::dreamer
