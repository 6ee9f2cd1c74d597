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

#include <cmath>

#include "lagmpc/sim/systems.hpp"

namespace lagmpc::sim {

// Linearization of the continuous dynamics about (q*, 0, u = 0).
struct Linearization {
  Matrix A;  // 2n x 2n
  Matrix B;  // 2n x m
};

inline Linearization linearize(const SystemSpec& s, const Eigen::Ref<const Vector>& q_eq) {
  const Index n = s.n;
  const double h = 1e-6;
  Linearization lin{Matrix::Zero(2 * n, 2 * n), Matrix::Zero(2 * n, s.m)};
  lin.A.topRightCorner(n, n).setIdentity();
  const Vector zero_n = Vector::Zero(n), zero_m = Vector::Zero(s.m);
  for (Index k = 0; k < n; ++k) {
    Vector dq = Vector::Zero(n);
    dq[k] = h;
    lin.A.block(n, k, n, 1) =
        (true_dynamics(s, q_eq + dq, zero_n, zero_m) - true_dynamics(s, q_eq - dq, zero_n, zero_m)) / (2 * h);
    lin.A.block(n, n + k, n, 1) =
        (true_dynamics(s, q_eq, dq, zero_m) - true_dynamics(s, q_eq, -dq, zero_m)) / (2 * h);
  }
  for (Index j = 0; j < s.m; ++j) {
    Vector du = Vector::Zero(s.m);
    du[j] = h;
    lin.B.block(n, j, n, 1) =
        (true_dynamics(s, q_eq, zero_n, du) - true_dynamics(s, q_eq, zero_n, -du)) / (2 * h);
  }
  return lin;
}

/// Discrete-time LQR gain for x_{k+1} = (I + A dt) x_k + B dt u_k by
/// fixed-point iteration of the Riccati recursion.
inline Matrix lqr_gain(const Linearization& lin, double dt, const Matrix& Q, const Matrix& R) {
  const Matrix Ad = Matrix::Identity(lin.A.rows(), lin.A.cols()) + lin.A * dt;
  const Matrix Bd = lin.B * dt;
  Matrix P = Q;
  Matrix K;
  for (int it = 0; it < 20000; ++it) {
    const Matrix S = R + Bd.transpose() * P * Bd;
    K = S.ldlt().solve(Bd.transpose() * P * Ad);
    const Matrix next = Q + Ad.transpose() * P * (Ad - Bd * K);
    const double change = (next - P).norm();
    P = 0.5 * (next + next.transpose());
    if (change < 1e-10 * (1.0 + P.norm())) break;
  }
  return K;
}

/// Scripted expert controller standing in for a learned actor.
///   pendulum, cart-pole: energy-shaping swing-up, LQR inside a capture region.
///   acrobot: saturated PD to the upright configuration.
/// Deterministic; outputs are clipped to the torque limits.
class Expert {
 public:
  explicit Expert(SystemSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind == SystemKind::kPendulum) {
      Matrix Q = Matrix::Identity(2, 2);
      Q(0, 0) = 10.0;
      gain_ = lqr_gain(linearize(spec_, spec_.target), spec_.dt, Q, Matrix::Identity(1, 1) * 0.1);
    } else if (spec_.kind == SystemKind::kCartPole) {
      Vector qd(4);
      qd << 1.0, 20.0, 1.0, 1.0;
      gain_ = lqr_gain(linearize(spec_, spec_.target), spec_.dt, qd.asDiagonal(), Matrix::Identity(1, 1) * 0.1);
    }
  }

  const SystemSpec& spec() const { return spec_; }
  const Matrix& lqr() const { return gain_; }

  Vector action(const GeneralizedState& z, const Eigen::Ref<const Vector>& command) const {
    switch (spec_.kind) {
      case SystemKind::kPendulum:
        return clip_action(spec_, pendulum(z, command));
      case SystemKind::kCartPole:
        return clip_action(spec_, cartpole(z, command));
      case SystemKind::kAcrobot:
        return clip_action(spec_, acrobot(z, command));
    }
    return Vector::Zero(spec_.m);
  }

 private:
  Vector lqr_action(const GeneralizedState& z, const Eigen::Ref<const Vector>& command) const {
    Vector err(2 * spec_.n);
    err << pose_error(spec_, z.q, command), z.qdot;
    return -gain_ * err;
  }

  Vector pendulum(const GeneralizedState& z, const Eigen::Ref<const Vector>& command) const {
    const double tilt = pose_error(spec_, z.q, command)[0];
    if (std::abs(tilt) < 0.3 && std::abs(z.qdot[0]) < 2.0) return lqr_action(z, command);
    const double m = spec_.mass1, l = spec_.length1, g = spec_.gravity;
    const double e = 0.5 * m * l * l * z.qdot[0] * z.qdot[0] + m * g * l * (1.0 - std::cos(z.q[0]));
    const double e_target = 2.0 * m * g * l;
    double direction = z.qdot[0];
    if (std::abs(direction) < 0.05) direction = 0.05;  // leave the resting equilibrium
    return Vector::Constant(1, 2.0 * (e_target - e) * direction);
  }

  Vector cartpole(const GeneralizedState& z, const Eigen::Ref<const Vector>& command) const {
    const double th = wrap_angle(z.q[1]), thd = z.qdot[1];
    if (std::abs(th) < 0.4 && std::abs(thd) < 3.0) return lqr_action(z, command);
    const double mp = spec_.mass2, l = spec_.length2, g = spec_.gravity;
    const double e = 0.5 * mp * l * l * thd * thd + mp * g * l * (std::cos(th) - 1.0);
    double accel = 8.0 * e * thd * std::cos(th) - 0.5 * (z.q[0] - command[0]) - 1.0 * z.qdot[0];
    if (std::abs(thd) < 0.05 && std::abs(th) > 3.0) accel += 2.0;  // leave the resting equilibrium
    accel = std::clamp(accel, -15.0, 15.0);
    // Force realising the cart acceleration, with the pole row solved
    // consistently for its acceleration.
    const LagrangianTerms t = analytic_terms(spec_, z.q, z.qdot);
    const double rest1 = t.Cqdot[1] + t.G[1] - t.H[1];
    const double pole_acc = -(t.M(1, 0) * accel + rest1) / t.M(1, 1);
    const double force = t.M(0, 0) * accel + t.M(0, 1) * pole_acc + t.Cqdot[0] + t.G[0] - t.H[0];
    return Vector::Constant(1, force);
  }

  Vector acrobot(const GeneralizedState& z, const Eigen::Ref<const Vector>& command) const {
    const Vector e = pose_error(spec_, z.q, command);
    return Vector::Constant(1, -(30.0 * e[0] + 15.0 * e[1] + 8.0 * z.qdot[0] + 4.0 * z.qdot[1]));
  }

  SystemSpec spec_;
  Matrix gain_;
};

inline Vector expert_action(const SystemSpec& spec, const GeneralizedState& z, const Eigen::Ref<const Vector>& command) {
  return Expert(spec).action(z, command);
}

}  // namespace lagmpc::sim
