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

// Analytic ground-truth mechanical systems.
//
// Conventions (all SI, gravity 9.81 m/s^2):
//   pendulum  q = [theta], theta = 0 hanging, upright at pi. B = I.
//   cartpole  q = [x, theta], theta = 0 upright, point-mass pole. B = e_x.
//   acrobot   q = [theta1, theta2], theta1 from upright, theta2 relative,
//             point masses at the link tips. B = e_elbow.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lagmpc/lnn/model.hpp"

namespace lagmpc::sim {

using lnn::GeneralizedState;
using lnn::LagrangianTerms;
using lnn::TermsBatch;

enum class SystemKind { kPendulum, kCartPole, kAcrobot };

struct SystemSpec {
  SystemKind kind = SystemKind::kPendulum;
  std::string name;
  Index n = 1;
  Index m = 1;
  Matrix B;
  std::vector<bool> angular;  // which coordinates are revolute (wrapped in observations)

  // Physical parameters. Pendulum: mass1/length1. Cart-pole: mass1 = cart,
  // mass2 = pole tip, length2 = pole. Acrobot: both links.
  double mass1 = 1.0, length1 = 1.0, mass2 = 0.0, length2 = 0.0;
  double gravity = 9.81;
  Vector damping;  // viscous, per DoF

  double dt = 0.02;
  Vector torque_limit;  // per actuated DoF
  int episode_length = 500;

  Vector target;            // commanded configuration q*
  Vector pose_weights;      // W_p diagonal
  Vector velocity_weights;  // W_v diagonal
};

inline SystemSpec make_system(SystemKind kind) {
  SystemSpec s;
  s.kind = kind;
  switch (kind) {
    case SystemKind::kPendulum:
      s.name = "pendulum";
      s.n = 1;
      s.m = 1;
      s.angular = {true};
      s.mass1 = 1.0;
      s.length1 = 1.0;
      s.torque_limit = Vector::Constant(1, 3.0);
      s.target = Vector::Constant(1, std::numbers::pi);
      s.pose_weights = Vector::Constant(1, 1.0);
      s.velocity_weights = Vector::Constant(1, 0.2);
      break;
    case SystemKind::kCartPole:
      s.name = "cartpole";
      s.n = 2;
      s.m = 1;
      s.angular = {false, true};
      s.mass1 = 1.0;
      s.mass2 = 0.25;
      s.length2 = 0.5;
      s.torque_limit = Vector::Constant(1, 10.0);
      s.target = Vector::Zero(2);
      s.pose_weights = (Vector(2) << 0.5, 1.0).finished();
      s.velocity_weights = (Vector(2) << 0.2, 0.2).finished();
      break;
    case SystemKind::kAcrobot:
      s.name = "acrobot";
      s.n = 2;
      s.m = 1;
      s.angular = {true, true};
      s.mass1 = 1.0;
      s.length1 = 1.0;
      s.mass2 = 1.0;
      s.length2 = 1.0;
      s.torque_limit = Vector::Constant(1, 8.0);
      s.target = Vector::Zero(2);
      s.pose_weights = (Vector(2) << 1.0, 1.0).finished();
      s.velocity_weights = (Vector(2) << 0.1, 0.1).finished();
      break;
  }
  s.damping = Vector::Zero(s.n);
  s.B = Matrix::Zero(s.n, s.m);
  if (kind == SystemKind::kPendulum) s.B(0, 0) = 1.0;
  if (kind == SystemKind::kCartPole) s.B(0, 0) = 1.0;
  if (kind == SystemKind::kAcrobot) s.B(1, 0) = 1.0;
  return s;
}

inline SystemSpec make_system(const std::string& name) {
  if (name == "pendulum") return make_system(SystemKind::kPendulum);
  if (name == "cartpole") return make_system(SystemKind::kCartPole);
  if (name == "acrobot") return make_system(SystemKind::kAcrobot);
  throw Error(ErrorKind::kConfig, "unknown system '" + name + "' (pendulum|cartpole|acrobot)");
}

// ---- analytic Lagrangian terms ----

inline Matrix mass_matrix(const SystemSpec& s, const Eigen::Ref<const Vector>& q) {
  Matrix M(s.n, s.n);
  switch (s.kind) {
    case SystemKind::kPendulum:
      M(0, 0) = s.mass1 * s.length1 * s.length1;
      break;
    case SystemKind::kCartPole: {
      const double c = s.mass2 * s.length2 * std::cos(q[1]);
      M << s.mass1 + s.mass2, c, c, s.mass2 * s.length2 * s.length2;
      break;
    }
    case SystemKind::kAcrobot: {
      const double l1 = s.length1, l2 = s.length2, m1 = s.mass1, m2 = s.mass2;
      const double c2 = std::cos(q[1]);
      const double m12 = m2 * (l2 * l2 + l1 * l2 * c2);
      M << m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2), m12, m12, m2 * l2 * l2;
      break;
    }
  }
  return M;
}

// dM/dq_k for every k.
inline std::vector<Matrix> mass_matrix_derivatives(const SystemSpec& s, const Eigen::Ref<const Vector>& q) {
  std::vector<Matrix> dM(s.n, Matrix::Zero(s.n, s.n));
  switch (s.kind) {
    case SystemKind::kPendulum:
      break;
    case SystemKind::kCartPole: {
      const double d = -s.mass2 * s.length2 * std::sin(q[1]);
      dM[1] << 0.0, d, d, 0.0;
      break;
    }
    case SystemKind::kAcrobot: {
      const double d = -s.mass2 * s.length1 * s.length2 * std::sin(q[1]);
      dM[1] << 2.0 * d, d, d, 0.0;
      break;
    }
  }
  return dM;
}

inline double potential(const SystemSpec& s, const Eigen::Ref<const Vector>& q) {
  const double g = s.gravity;
  switch (s.kind) {
    case SystemKind::kPendulum:
      return -s.mass1 * g * s.length1 * std::cos(q[0]);
    case SystemKind::kCartPole:
      return s.mass2 * g * s.length2 * std::cos(q[1]);
    case SystemKind::kAcrobot:
      return g * (s.mass1 * s.length1 * std::cos(q[0]) +
                  s.mass2 * (s.length1 * std::cos(q[0]) + s.length2 * std::cos(q[0] + q[1])));
  }
  return 0.0;
}

inline Vector potential_gradient(const SystemSpec& s, const Eigen::Ref<const Vector>& q) {
  const double g = s.gravity;
  Vector G(s.n);
  switch (s.kind) {
    case SystemKind::kPendulum:
      G[0] = s.mass1 * g * s.length1 * std::sin(q[0]);
      break;
    case SystemKind::kCartPole:
      G << 0.0, -s.mass2 * g * s.length2 * std::sin(q[1]);
      break;
    case SystemKind::kAcrobot: {
      const double s12 = std::sin(q[0] + q[1]);
      G << -g * (s.mass1 * s.length1 * std::sin(q[0]) + s.mass2 * (s.length1 * std::sin(q[0]) + s.length2 * s12)),
          -g * s.mass2 * s.length2 * s12;
      break;
    }
  }
  return G;
}

inline Vector external_force(const SystemSpec& s, const Eigen::Ref<const Vector>&,
                             const Eigen::Ref<const Vector>& qdot) {
  return -s.damping.cwiseProduct(qdot);
}

inline LagrangianTerms analytic_terms(const SystemSpec& s, const Eigen::Ref<const Vector>& q,
                                      const Eigen::Ref<const Vector>& qdot) {
  LagrangianTerms t;
  t.M = mass_matrix(s, q);
  const auto dM = mass_matrix_derivatives(s, q);
  Matrix Mdot = Matrix::Zero(s.n, s.n);
  Vector quad(s.n);
  for (Index k = 0; k < s.n; ++k) {
    Mdot += qdot[k] * dM[k];
    quad[k] = qdot.dot(dM[k] * qdot);
  }
  t.Cqdot = Mdot * qdot - 0.5 * quad;
  t.G = potential_gradient(s, q);
  t.H = external_force(s, q, qdot);
  t.V = potential(s, q);
  return t;
}

inline Vector true_dynamics(const SystemSpec& s, const Eigen::Ref<const Vector>& q,
                            const Eigen::Ref<const Vector>& qdot, const Eigen::Ref<const Vector>& u) {
  require_dim(q.size(), s.n, "q");
  require_dim(qdot.size(), s.n, "qdot");
  require_dim(u.size(), s.m, "u");
  const LagrangianTerms t = analytic_terms(s, q, qdot);
  return t.M.llt().solve(s.B * u + t.H - t.Cqdot - t.G);
}

inline double energy(const SystemSpec& s, const GeneralizedState& z) {
  return 0.5 * z.qdot.dot(mass_matrix(s, z.q) * z.qdot) + potential(s, z.q);
}

/// The analytic system exposed through the same interface as the learned
/// model, so every algorithm can run against exact dynamics.
class AnalyticModel {
 public:
  explicit AnalyticModel(SystemSpec spec, bool half_step = false)
      : spec_(std::move(spec)), half_step_(half_step) {}

  Index dof() const { return spec_.n; }
  Index actuated() const { return spec_.m; }
  double dt() const { return spec_.dt; }
  bool half_step() const { return half_step_; }
  const Matrix& actuation() const { return spec_.B; }
  const SystemSpec& spec() const { return spec_; }

  TermsBatch terms_batch(const Matrix& Q, const Matrix& Qd) const {
    const Index n = spec_.n, batch = Q.cols();
    TermsBatch out{Matrix(n * n, batch), Matrix(n, batch), Matrix(n, batch), Matrix(n, batch),
                   Matrix(1, batch)};
    for (Index c = 0; c < batch; ++c) {
      const LagrangianTerms t = analytic_terms(spec_, Q.col(c), Qd.col(c));
      out.M.col(c) = Eigen::Map<const Vector>(t.M.data(), n * n);
      out.Cqdot.col(c) = t.Cqdot;
      out.G.col(c) = t.G;
      out.H.col(c) = t.H;
      out.V(0, c) = t.V;
    }
    return out;
  }

 private:
  SystemSpec spec_;
  bool half_step_;
};

static_assert(lnn::LagrangianModel<AnalyticModel>);
static_assert(lnn::LagrangianModel<lnn::LnnModel>);

// ---- integration ----

enum class Integrator { kEulerPaper, kRk4 };

inline Integrator integrator_from_string(const std::string& s) {
  if (s == "euler_paper") return Integrator::kEulerPaper;
  if (s == "rk4") return Integrator::kRk4;
  throw Error(ErrorKind::kConfig, "unknown integrator '" + s + "' (euler_paper|rk4)");
}
inline std::string to_string(Integrator i) { return i == Integrator::kRk4 ? "rk4" : "euler_paper"; }

/// One control period with zero-order-hold input. euler_paper applies the
/// model-side discrete update exactly; rk4 integrates with ten sub-steps.
inline GeneralizedState simulate_step(const SystemSpec& s, const GeneralizedState& z,
                                      const Eigen::Ref<const Vector>& u, Integrator integrator) {
  if (integrator == Integrator::kEulerPaper) {
    const Vector qdd = true_dynamics(s, z.q, z.qdot, u);
    return {z.q + z.qdot * s.dt + qdd * s.dt * s.dt, z.qdot + qdd * s.dt};
  }
  constexpr int kSubsteps = 10;
  const double h = s.dt / kSubsteps;
  Vector q = z.q, v = z.qdot;
  for (int i = 0; i < kSubsteps; ++i) {
    const Vector k1q = v, k1v = true_dynamics(s, q, v, u);
    const Vector k2q = v + 0.5 * h * k1v, k2v = true_dynamics(s, q + 0.5 * h * k1q, v + 0.5 * h * k1v, u);
    const Vector k3q = v + 0.5 * h * k2v, k3v = true_dynamics(s, q + 0.5 * h * k2q, v + 0.5 * h * k2v, u);
    const Vector k4q = v + h * k3v, k4v = true_dynamics(s, q + h * k3q, v + h * k3v, u);
    q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }
  return {q, v};
}

// ---- observation, reward ----

// Revolute coordinates wrapped to (-pi, pi]; prismatic ones untouched.
inline Vector wrap_positions(const SystemSpec& s, const Eigen::Ref<const Vector>& q) {
  Vector w = q;
  for (Index i = 0; i < s.n; ++i)
    if (s.angular[i]) w[i] = wrap_angle(q[i]);
  return w;
}

inline Vector pose_error(const SystemSpec& s, const Eigen::Ref<const Vector>& q,
                         const Eigen::Ref<const Vector>& command) {
  return wrap_positions(s, q - command);
}

// Observation = [wrapped positions, previous action, command]; velocities
// are withheld and must be inferred from history.
inline Index observation_dim(const SystemSpec& s) { return s.n + s.m + s.n; }

inline Vector observation(const SystemSpec& s, const GeneralizedState& z, const Eigen::Ref<const Vector>& prev_action,
                          const Eigen::Ref<const Vector>& command) {
  Vector o(observation_dim(s));
  o << wrap_positions(s, z.q), prev_action, command;
  return o;
}

/// r = exp(-|W_p e|^2) + 0.5 exp(-|W_v qdot|^2) - 0.001 |u|^2.
inline double reward(const SystemSpec& s, const GeneralizedState& z, const Eigen::Ref<const Vector>& u,
                     const Eigen::Ref<const Vector>& command) {
  const Vector e = s.pose_weights.cwiseProduct(pose_error(s, z.q, command));
  const Vector v = s.velocity_weights.cwiseProduct(z.qdot);
  return std::exp(-e.squaredNorm()) + 0.5 * std::exp(-v.squaredNorm()) - 0.001 * u.squaredNorm();
}

inline Vector clip_action(const SystemSpec& s, const Eigen::Ref<const Vector>& u) {
  return u.cwiseMax(-s.torque_limit).cwiseMin(s.torque_limit);
}

/// Stacked state with revolute coordinates wrapped. Used as the canonical
/// representative of a state for learning targets.
inline Vector canonical_state(const SystemSpec& s, const Eigen::Ref<const Vector>& z) {
  Vector out = z;
  out.head(s.n) = wrap_positions(s, z.head(s.n));
  return out;
}

// ---- reduced single-body (CoM) coordinates ----

inline Index com_dof(const SystemSpec& s) { return s.kind == SystemKind::kPendulum ? 1 : 3; }

inline Matrix com_actuation(const SystemSpec& s) {
  Matrix B = Matrix::Zero(com_dof(s), 1);
  switch (s.kind) {
    case SystemKind::kPendulum:
    case SystemKind::kCartPole:
      B(0, 0) = 1.0;
      break;
    case SystemKind::kAcrobot:
      B(2, 0) = 1.0;
      break;
  }
  return B;
}

/// Reduced state c = [positions; rates] of the whole mechanism treated as a
/// single rigid body. Pendulum: identity. Cart-pole: (x_com, z_com, pole
/// pitch). Acrobot: (x_com, z_com, angle of the pivot-to-CoM line).
inline Vector com_reduce(const SystemSpec& s, const GeneralizedState& z) {
  switch (s.kind) {
    case SystemKind::kPendulum:
      return z.stacked();
    case SystemKind::kCartPole: {
      const double r = s.mass2 / (s.mass1 + s.mass2) * s.length2;
      const double th = z.q[1], thd = z.qdot[1];
      Vector c(6);
      c << z.q[0] + r * std::sin(th), r * std::cos(th), th, z.qdot[0] + r * std::cos(th) * thd,
          -r * std::sin(th) * thd, thd;
      return c;
    }
    case SystemKind::kAcrobot: {
      const double m1 = s.mass1, m2 = s.mass2, mt = m1 + m2;
      const double a1 = z.q[0], a12 = z.q[0] + z.q[1];
      const double w1 = z.qdot[0], w12 = z.qdot[0] + z.qdot[1];
      const double x1 = s.length1 * std::sin(a1), z1 = s.length1 * std::cos(a1);
      const double x2 = x1 + s.length2 * std::sin(a12), z2 = z1 + s.length2 * std::cos(a12);
      const double vx1 = s.length1 * std::cos(a1) * w1, vz1 = -s.length1 * std::sin(a1) * w1;
      const double vx2 = vx1 + s.length2 * std::cos(a12) * w12, vz2 = vz1 - s.length2 * std::sin(a12) * w12;
      const double xc = (m1 * x1 + m2 * x2) / mt, zc = (m1 * z1 + m2 * z2) / mt;
      const double vxc = (m1 * vx1 + m2 * vx2) / mt, vzc = (m1 * vz1 + m2 * vz2) / mt;
      const double r2 = std::max(xc * xc + zc * zc, 1e-12);
      Vector c(6);
      c << xc, zc, std::atan2(xc, zc), vxc, vzc, (zc * vxc - xc * vzc) / r2;
      return c;
    }
  }
  return {};
}

// ---- initial states ----

enum class InitMode { kUniform, kHanging, kUpright };

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "uniform") return InitMode::kUniform;
  if (s == "hanging") return InitMode::kHanging;
  if (s == "upright") return InitMode::kUpright;
  throw Error(ErrorKind::kConfig, "unknown init mode '" + s + "' (uniform|hanging|upright)");
}
inline std::string to_string(InitMode m) {
  return m == InitMode::kUniform ? "uniform" : (m == InitMode::kHanging ? "hanging" : "upright");
}

inline GeneralizedState initial_state(const SystemSpec& s, Rng& rng, InitMode mode) {
  constexpr double kPi = std::numbers::pi;
  GeneralizedState z{Vector::Zero(s.n), Vector::Zero(s.n)};
  // Configuration the mode is centred on.
  Vector hanging = Vector::Zero(s.n), upright = s.target;
  if (s.kind == SystemKind::kCartPole) hanging[1] = kPi;
  if (s.kind == SystemKind::kAcrobot) hanging[0] = kPi;
  switch (mode) {
    case InitMode::kUniform:
      for (Index i = 0; i < s.n; ++i) {
        z.q[i] = s.angular[i] ? uniform(rng, -kPi, kPi) : uniform(rng, -0.5, 0.5);
        z.qdot[i] = uniform(rng, -1.0, 1.0);
      }
      break;
    case InitMode::kHanging:
      for (Index i = 0; i < s.n; ++i) {
        z.q[i] = hanging[i] + uniform(rng, -0.1, 0.1);
        z.qdot[i] = uniform(rng, -0.1, 0.1);
      }
      break;
    case InitMode::kUpright:
      for (Index i = 0; i < s.n; ++i) {
        z.q[i] = upright[i] + uniform(rng, -0.2, 0.2);
        z.qdot[i] = uniform(rng, -0.2, 0.2);
      }
      break;
  }
  return z;
}

}  // namespace lagmpc::sim
