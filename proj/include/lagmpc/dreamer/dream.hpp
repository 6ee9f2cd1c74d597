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

// Closed-loop imagination with the policy head and a dynamics model.

#include <functional>

#include "lagmpc/dreamer/heads.hpp"
#include "lagmpc/lnn/model.hpp"
#include "lagmpc/zoo/models.hpp"

namespace lagmpc::dreamer {

/// z_{k+1} = d(z_k, a_k) on full states.
using StepFn = std::function<Vector(const Vector&, const Vector&)>;

inline StepFn model_step(const zoo::DynamicsModelHandle& model) {
  require(!model.uses_com(), ErrorKind::kUnsupported, "dreaming needs a full-state dynamics model, not com_lnn");
  return [&model](const Vector& z, const Vector& a) -> Vector { return model.step_batch(z, a).col(0); };
}

template <lnn::LagrangianModel Model>
StepFn lagrangian_step(const Model& model) {
  return [&model](const Vector& z, const Vector& a) -> Vector {
    return lnn::step(model, lnn::GeneralizedState::from_stacked(z), a).stacked();
  };
}

struct DreamtTrajectory {
  Matrix states;   // 2n x H, z_{t+1..t+H}
  Matrix actions;  // m x H, a_{t..t+H-1}
  Vector rewards;  // H, r(z_k, a_k)
  bool truncated = false;

  Index length() const { return states.cols(); }
};

/// a_k = pi(z_k), z_{k+1} = d(z_k, a_k) for k = 0..H-1. A non-finite state
/// stops the rollout early with truncated set.
inline DreamtTrajectory dream(const DreamerHeads& heads, const StepFn& step, const Vector& z, Index H) {
  require(H >= 1, ErrorKind::kInvalidArg, "dream horizon must be >= 1");
  require_dim(z.size(), 2 * heads.spec.n, "dream start state");
  const Index m = heads.spec.m;
  DreamtTrajectory y{Matrix(z.size(), H), Matrix(m, H), Vector(H), false};
  Vector cur = z;
  for (Index k = 0; k < H; ++k) {
    const Vector a = heads.act(cur);
    const Vector next = step(cur, a);
    if (!all_finite(a) || !all_finite(next)) {
      y.states.conservativeResize(Eigen::NoChange, k);
      y.actions.conservativeResize(Eigen::NoChange, k);
      y.rewards.conservativeResize(k);
      y.truncated = true;
      return y;
    }
    y.actions.col(k) = a;
    y.rewards[k] = heads.reward_batch(cur, a)(0, 0);
    y.states.col(k) = next;
    cur = next;
  }
  return y;
}

/// Per-step means and scales of a diagonal Gaussian over an H-row sequence.
struct SamplingDistribution {
  Matrix mu;     // H x d
  Matrix sigma;  // H x d

  Index horizon() const { return mu.rows(); }
  Index dim() const { return mu.cols(); }
};

/// Position-space distribution for the inverse planner: mu holds q_{1..H}
/// of the dreamt trajectory, sigma is the constant sigma0 per DoF.
inline SamplingDistribution rollout_distribution(const DreamerHeads& heads, const StepFn& step, const Vector& z,
                                                 Index H, const Vector& sigma0) {
  const Index n = heads.spec.n;
  require_dim(sigma0.size(), n, "sigma0");
  const DreamtTrajectory y = dream(heads, step, z, H);
  SamplingDistribution d{Matrix(H, n), sigma0.transpose().replicate(H, 1)};
  for (Index k = 0; k < H; ++k) {
    // A truncated dream holds its last finite position.
    const Index src = std::min(k, y.length() - 1);
    const Vector q = src >= 0 ? Vector(y.states.col(src).head(n)) : Vector(z.head(n));
    d.mu.row(k) = q.transpose();
  }
  return d;
}

/// Action-space distribution for the forward planner: mu holds a_{0..H-1}.
inline SamplingDistribution rollout_action_distribution(const DreamerHeads& heads, const StepFn& step,
                                                        const Vector& z, Index H, const Vector& sigma0) {
  const Index m = heads.spec.m;
  require_dim(sigma0.size(), m, "action sigma0");
  const DreamtTrajectory y = dream(heads, step, z, H);
  SamplingDistribution d{Matrix::Zero(H, m), sigma0.transpose().replicate(H, 1)};
  for (Index k = 0; k < y.length(); ++k) d.mu.row(k) = y.actions.col(k).transpose();
  return d;
}

}  // namespace lagmpc::dreamer
