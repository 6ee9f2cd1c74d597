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

// Sampling MPC. plan_inverse searches over joint-position sequences and
// scores them through the inverse dynamics map, so no linear solve happens
// on the scoring path. plan_forward searches over action sequences and
// integrates the forward dynamics; it is the baseline for latency.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "lagmpc/dreamer/dream.hpp"

namespace lagmpc::planner {

using dreamer::DreamerHeads;
using dreamer::SamplingDistribution;

struct PlannerConfig {
  Index H = 8;          // horizon
  Index N = 6;          // refinement iterations
  Index M = 500;        // samples from the running distribution
  Index M_pi = 30;      // samples from the policy rollout distribution
  Index M_elite = 60;
  double gamma = 0.99;
  double beta = 0.95;   // momentum on the elite refit
  double alpha = 0.5;   // warm-start blend
  double lambda = 1.0;  // root-force penalty weight
  Vector sigma0;        // per-DoF position scale; empty means 0.05 rad
  double sigma_min = 1e-4;
  double sigma0_action_fraction = 0.1;  // forward planner, fraction of torque limit
  double root_reject_threshold = 0.0;   // > 0 enables hard rejection on |root| per step
  bool common_random_numbers = false;   // reuse one set of draws across iterations
  bool carry_elites = false;            // previous elites compete in the next ranking
  bool anchor_warm = true;              // translate the warm start onto q0 (else whole turns only)
  int first_action_step = 0;            // 0: u_0 from (q_0, qdot_init); 1: u_1 from the loop body
  bool clip_actuation = true;           // reward sees clipped u; the excess joins the root penalty
};

inline void validate(const PlannerConfig& c) {
  require(c.H >= 1 && c.N >= 1 && c.M >= 1 && c.M_pi >= 0 && c.M_elite >= 1, ErrorKind::kConfig,
          "planner counts must be >= 1 (M_pi >= 0)");
  require(c.M_elite <= c.M + c.M_pi, ErrorKind::kConfig,
          "planner.M_elite (" + std::to_string(c.M_elite) + ") exceeds M + M_pi (" +
              std::to_string(c.M + c.M_pi) + ")");
  require(c.alpha >= 0.0 && c.alpha <= 1.0, ErrorKind::kConfig, "planner.alpha must be in [0, 1]");
  require(c.beta >= 0.0 && c.beta <= 1.0, ErrorKind::kConfig, "planner.beta must be in [0, 1]");
  require(c.gamma > 0.0 && c.gamma < 1.0, ErrorKind::kConfig, "planner.gamma must be in (0, 1)");
  require(c.sigma_min > 0.0, ErrorKind::kConfig, "planner.sigma_min must be positive");
  require(c.first_action_step == 0 || c.first_action_step == 1, ErrorKind::kConfig,
          "planner.first_action_step must be 0 or 1");
  require(c.first_action_step == 0 || c.H >= 2, ErrorKind::kConfig, "planner.first_action_step 1 needs H >= 2");
  for (Index i = 0; i < c.sigma0.size(); ++i)
    require(c.sigma0[i] >= 0.0, ErrorKind::kConfig, "planner.sigma0 entries must be >= 0");
}

inline Vector position_sigma0(const PlannerConfig& c, Index n) {
  if (c.sigma0.size() == 0) return Vector::Constant(n, 0.05);
  require_dim(c.sigma0.size(), n, "planner.sigma0");
  return c.sigma0;
}

/// (qdot_k, qddot_k) = ((q_k - q_{k-1}) / dt, (q_{k+1} - 2 q_k + q_{k-1}) / dt^2).
inline std::pair<Vector, Vector> finite_difference(const Vector& q_prev, const Vector& q_k, const Vector& q_next,
                                                   double dt) {
  require(dt > 0.0, ErrorKind::kInvalidArg, "finite_difference needs dt > 0");
  return {(q_k - q_prev) / dt, (q_next - 2.0 * q_k + q_prev) / (dt * dt)};
}

struct Diagnostics {
  double best_return = -std::numeric_limits<double>::infinity();
  double mean_root_penalty = 0.0;  // final iteration, per scored sample
  double wall_ms = 0.0;
  long scored = 0;                 // trajectories scored
  long rejected = 0;               // hard root-force rejections
  long non_finite = 0;
  long model_columns = 0;          // states pushed through the dynamics model
  bool fallback = false;           // every sample was -inf; policy action used
  std::vector<double> iteration_best;  // best elite return per iteration
};

struct PlanResult {
  Vector action;                 // clipped first action
  SamplingDistribution final;    // (mu^N, sigma^N), unshifted
  Diagnostics diag;
};

/// Drops the first row and repeats the last: the previous solution aligned
/// to the next control step.
inline SamplingDistribution shift_one_step(const SamplingDistribution& d) {
  SamplingDistribution out = d;
  const Index H = d.horizon();
  if (H > 1) {
    out.mu.topRows(H - 1) = d.mu.bottomRows(H - 1);
    out.sigma.topRows(H - 1) = d.sigma.bottomRows(H - 1);
  }
  return out;
}

/// Moves each revolute column of a position-space plan by a whole number of
/// turns so its first step is nearest q0. Closed-loop states are wrapped, so a
/// plan made before the state crossed the seam is otherwise 2*pi away.
inline SamplingDistribution align_turns(SamplingDistribution d, const Vector& q0, const std::vector<bool>& angular) {
  constexpr double kTurn = 2.0 * std::numbers::pi;
  for (Index i = 0; i < d.mu.cols(); ++i) {
    if (i >= static_cast<Index>(angular.size()) || !angular[i] || d.mu.rows() == 0) continue;
    const double turns = std::round((d.mu(0, i) - q0[i]) / kTurn);
    d.mu.col(i).array() -= turns * kTurn;
  }
  return d;
}

/// The previous solution shifted one step and translated so that the step it
/// predicted for now lands on the observed q0. Model error and state
/// estimation put q0 off that prediction, and the first transition divides any
/// offset by dt^2. Covers whole-turn seams as well. Given the position the
/// previous plan started from, a ramp also matches its velocity to qd0, so the
/// plan's accelerations are replayed from the current state.
inline SamplingDistribution anchor_warm(const SamplingDistribution& prev, const Vector& q0, const Vector& qd0,
                                        const Vector* prev_q0, double dt) {
  SamplingDistribution d = shift_one_step(prev);
  if (prev.mu.rows() == 0) return d;
  require_dim(q0.size(), prev.mu.cols(), "warm-start anchor");
  const RowVector offset = q0.transpose() - prev.mu.row(0);
  d.mu.rowwise() += offset;
  if (prev_q0 != nullptr) {
    require_dim(prev_q0->size(), q0.size(), "warm-start origin");
    // Backward difference of the previous plan; the turn count cancels.
    const RowVector v_pred = (prev.mu.row(0) - prev_q0->transpose()) / dt;
    const RowVector dv = qd0.transpose() - v_pred;
    for (Index k = 0; k < d.mu.rows(); ++k) d.mu.row(k) += static_cast<double>(k + 1) * dt * dv;
  }
  return d;
}

inline SamplingDistribution blend(const SamplingDistribution& a, const SamplingDistribution& b, double w) {
  require(a.mu.rows() == b.mu.rows() && a.mu.cols() == b.mu.cols(), ErrorKind::kShape,
          "cannot blend sampling distributions of different shapes");
  return {w * a.mu + (1.0 - w) * b.mu, w * a.sigma + (1.0 - w) * b.sigma};
}

// ---- scoring ----

struct ScoreBatch {
  Vector returns;       // -inf for rejected or non-finite samples
  Vector root_penalty;  // sum over steps of |root_k|^2
  long rejected = 0;
  long non_finite = 0;
  long model_columns = 0;
};

/// Scores S position trajectories at once. Trajectory j occupies columns
/// j*(H+1) .. j*(H+1)+H of Q (n x S(H+1)), column 0 being q_init.
///   k = 1..H-1:  (qdot_k, qddot_k) = F(q_{k-1}, q_k, q_{k+1})
///                tau = g(q_k, qdot_k, qddot_k), (u_k, root_k) = split(tau)
///                R += gamma^k r(q_k, qdot_k, u_k) - lambda |root_k|^2
///   terminal:    R += gamma^H V(q_H, (q_H - q_{H-1}) / dt)
/// Given the current velocity, the first transition is scored as well:
///   k = 0:       qddot_0 from (q_0, q_1, qdot_init) under the discrete update,
///                R += r(q_0, qdot_init, u_0) - lambda |root_0|^2
/// This is the transition the executed action comes from, so it has to be
/// feasible too.
template <lnn::LagrangianModel Model>
ScoreBatch score_batch(const Model& model, const DreamerHeads& heads, const Matrix& Q, Index H,
                       const PlannerConfig& cfg, const Vector* qdot_init = nullptr) {
  const Index n = model.dof(), T = H + 1;
  require(Q.cols() % T == 0, ErrorKind::kShape, "position batch is not a whole number of trajectories");
  const Index S = Q.cols() / T;
  const double dt = model.dt();
  const auto split = lnn::actuation_split(model.actuation());
  ScoreBatch out{Vector::Zero(S), Vector::Zero(S), 0, 0, 0};

  // One batch of S columns per horizon step keeps the working set small;
  // a single S(H-1)-column batch is slower on a CPU.
  Vector root_max = Vector::Zero(S);
  auto add_step = [&](const Matrix& Qk, const Matrix& Qd, const Matrix& Qdd, double discount) {
    const Matrix tau = lnn::inverse_dynamics_batch(model, Qk, Qd, Qdd);
    out.model_columns += S;
    Matrix U(split.actuated_rows.size(), S);
    for (std::size_t i = 0; i < split.actuated_rows.size(); ++i) U.row(i) = tau.row(split.actuated_rows[i]);
    Vector root_sq = Vector::Zero(S);
    for (Index r : split.unactuated_rows) {
      root_sq += tau.row(r).transpose().cwiseAbs2();
      root_max = root_max.cwiseMax(tau.row(r).transpose().cwiseAbs());
    }
    // Torque past the limit is as unavailable as root force.
    if (cfg.clip_actuation && heads.spec.torque_limit.size() == U.rows()) {
      for (Index i = 0; i < U.rows(); ++i) {
        const double lim = heads.spec.torque_limit[i];
        root_sq += (U.row(i).transpose().cwiseAbs().array() - lim).max(0.0).square().matrix();
        U.row(i) = U.row(i).cwiseMax(-lim).cwiseMin(lim);
      }
    }
    Matrix Z(2 * n, S);
    Z << Qk, Qd;
    out.returns += discount * heads.reward_batch(Z, U).row(0).transpose() - cfg.lambda * root_sq;
    out.root_penalty += root_sq;
  };

  if (qdot_init != nullptr) {
    require_dim(qdot_init->size(), n, "planner qdot_init");
    const double pos_coeff = model.half_step() ? 0.5 : 1.0;
    Matrix Q0(n, S), Qd(n, S), Qdd(n, S);
    for (Index j = 0; j < S; ++j) {
      Q0.col(j) = Q.col(j * T);
      Qd.col(j) = *qdot_init;
      Qdd.col(j) = (Q.col(j * T + 1) - Q.col(j * T) - *qdot_init * dt) / (pos_coeff * dt * dt);
    }
    add_step(Q0, Qd, Qdd, 1.0);
  }
  double discount = 1.0;
  for (Index k = 1; k < H; ++k) {
    discount *= cfg.gamma;
    Matrix Qk(n, S), Qd(n, S), Qdd(n, S);
    for (Index j = 0; j < S; ++j) {
      const Index c = j * T + k;
      Qk.col(j) = Q.col(c);
      Qd.col(j) = (Q.col(c) - Q.col(c - 1)) / dt;
      Qdd.col(j) = (Q.col(c + 1) - 2.0 * Q.col(c) + Q.col(c - 1)) / (dt * dt);
    }
    add_step(Qk, Qd, Qdd, discount);
  }
  if (cfg.root_reject_threshold > 0.0) {
    for (Index j = 0; j < S; ++j) {
      if (root_max[j] > cfg.root_reject_threshold) {
        out.returns[j] = -std::numeric_limits<double>::infinity();
        ++out.rejected;
      }
    }
  }

  Matrix ZH(2 * n, S);
  for (Index j = 0; j < S; ++j) {
    ZH.col(j).head(n) = Q.col(j * T + H);
    ZH.col(j).tail(n) = (Q.col(j * T + H) - Q.col(j * T + H - 1)) / dt;
  }
  const Matrix V = heads.value_batch(ZH);
  const double gH = std::pow(cfg.gamma, static_cast<double>(H));
  for (Index j = 0; j < S; ++j) {
    if (out.returns[j] == -std::numeric_limits<double>::infinity()) continue;
    out.returns[j] += gH * V(0, j);
    if (!std::isfinite(out.returns[j])) {
      out.returns[j] = -std::numeric_limits<double>::infinity();
      ++out.non_finite;
    }
  }
  return out;
}

/// Single-trajectory form. q_traj is n x (H+1) with column 0 = q_init.
template <lnn::LagrangianModel Model>
double score_trajectory(const Model& model, const DreamerHeads& heads, const Matrix& q_traj,
                        const PlannerConfig& cfg) {
  require(q_traj.cols() >= 2, ErrorKind::kShape, "trajectory needs q_init and at least one step");
  require_dim(q_traj.rows(), model.dof(), "trajectory rows");
  return score_batch(model, heads, q_traj, q_traj.cols() - 1, cfg).returns[0];
}

/// Input realizing the step q_0 -> q_1 from velocity qdot_init under the
/// discrete update, or u_1 from the loop body when first_action_step = 1.
template <lnn::LagrangianModel Model>
Vector extract_action(const Model& model, const Matrix& q_traj, const Vector& qdot_init, const PlannerConfig& cfg) {
  const double dt = model.dt();
  const double pos_coeff = model.half_step() ? 0.5 : 1.0;
  Vector q, qd, qdd;
  if (cfg.first_action_step == 0) {
    q = q_traj.col(0);
    qd = qdot_init;
    qdd = (q_traj.col(1) - q_traj.col(0) - qdot_init * dt) / (pos_coeff * dt * dt);
  } else {
    auto [v, a] = finite_difference(q_traj.col(0), q_traj.col(1), q_traj.col(2), dt);
    q = q_traj.col(1);
    qd = v;
    qdd = a;
  }
  return lnn::split_actuation(model, lnn::inverse_dynamics(model, q, qd, qdd)).u;
}

// ---- shared sampling machinery ----

namespace detail {

// Sorted by descending return, ties by index; -inf sorts last.
inline std::vector<Index> rank(const Vector& returns) {
  std::vector<Index> order(returns.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return returns[a] > returns[b]; });
  return order;
}

inline Matrix standard_normals(Rng& rng, Index rows, Index cols) {
  Matrix E(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) E(i, j) = standard_normal(rng);
  return E;
}

// One sample per column block: sample s has H x d entries laid out as E(:, s*d .. s*d+d-1).
inline Matrix draw(const SamplingDistribution& d, const Matrix& E, Index first, Index count) {
  const Index dim = d.dim();
  Matrix out(d.horizon(), dim * count);
  for (Index s = 0; s < count; ++s)
    out.middleCols(s * dim, dim) = d.mu + d.sigma.cwiseProduct(E.middleCols((first + s) * dim, dim));
  return out;
}

inline SamplingDistribution refit(const Matrix& samples, const std::vector<Index>& elite, Index dim, double floor) {
  const Index H = samples.rows();
  const double count = static_cast<double>(elite.size());
  SamplingDistribution d{Matrix::Zero(H, dim), Matrix::Zero(H, dim)};
  for (Index e : elite) d.mu += samples.middleCols(e * dim, dim);
  d.mu /= count;
  for (Index e : elite) d.sigma += (samples.middleCols(e * dim, dim) - d.mu).cwiseAbs2();
  d.sigma = (d.sigma / count).cwiseSqrt().cwiseMax(floor);
  return d;
}

/// The CEM/MPPI-style loop shared by both planners. score(samples, count)
/// returns per-sample returns for `count` H x dim samples laid side by side.
template <class ScoreFn>
SamplingDistribution optimize(const SamplingDistribution& start, const SamplingDistribution& policy_dist,
                              const PlannerConfig& cfg, std::uint64_t seed, ScoreFn&& score, Diagnostics& diag) {
  const Index dim = start.dim(), S = cfg.M + cfg.M_pi;
  Rng rng = make_rng(seed, 0x706c616e);
  SamplingDistribution cur = start;
  cur.sigma = cur.sigma.cwiseMax(cfg.sigma_min);
  SamplingDistribution pol = policy_dist;
  pol.sigma = pol.sigma.cwiseMax(cfg.sigma_min);
  Matrix E;
  if (cfg.common_random_numbers) E = standard_normals(rng, cur.horizon(), dim * S);
  bool any_finite = false;
  Matrix kept;      // carried elite samples, side by side
  Vector kept_ret;  // their returns (scoring is deterministic, so no rescoring)
  for (Index it = 0; it < cfg.N; ++it) {
    if (!cfg.common_random_numbers) E = standard_normals(rng, cur.horizon(), dim * S);
    Matrix samples(cur.horizon(), dim * S);
    samples.leftCols(dim * cfg.M) = draw(cur, E, 0, cfg.M);
    if (cfg.M_pi > 0) samples.rightCols(dim * cfg.M_pi) = draw(pol, E, cfg.M, cfg.M_pi);
    Vector returns = score(samples, S);
    diag.scored += S;
    if (cfg.carry_elites && kept_ret.size() > 0) {
      Matrix pool(samples.rows(), samples.cols() + kept.cols());
      pool << samples, kept;
      Vector all(returns.size() + kept_ret.size());
      all << returns, kept_ret;
      samples = std::move(pool);
      returns = std::move(all);
    }
    const std::vector<Index> order = rank(returns);
    if (!std::isfinite(returns[order[0]])) {
      diag.iteration_best.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    any_finite = true;
    std::vector<Index> elite;
    const Index pool_size = returns.size();
    for (Index e = 0; e < std::min(cfg.M_elite, pool_size) && std::isfinite(returns[order[e]]); ++e)
      elite.push_back(order[e]);
    diag.iteration_best.push_back(returns[order[0]]);
    diag.best_return = std::max(diag.best_return, returns[order[0]]);
    if (cfg.carry_elites) {
      kept.resize(samples.rows(), dim * static_cast<Index>(elite.size()));
      kept_ret.resize(static_cast<Index>(elite.size()));
      for (std::size_t e = 0; e < elite.size(); ++e) {
        kept.middleCols(static_cast<Index>(e) * dim, dim) = samples.middleCols(elite[e] * dim, dim);
        kept_ret[static_cast<Index>(e)] = returns[elite[e]];
      }
    }
    const SamplingDistribution fit = refit(samples, elite, dim, cfg.sigma_min);
    cur = blend(fit, cur, cfg.beta);
    cur.sigma = cur.sigma.cwiseMax(cfg.sigma_min);
  }
  diag.fallback = !any_finite;
  return cur;
}

}  // namespace detail

/// Inverse-dynamics sampling MPC over joint positions.
template <lnn::LagrangianModel Model>
PlanResult plan_inverse(const Model& model, const DreamerHeads& heads, const Vector& z,
                        const SamplingDistribution* warm, const PlannerConfig& cfg, std::uint64_t seed,
                        const Vector* warm_origin = nullptr) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = model.dof(), H = cfg.H;
  require_dim(z.size(), 2 * n, "planner state");
  require(all_finite(z), ErrorKind::kInvalidArg, "planner state is not finite");
  const Vector q0 = z.head(n), qd0 = z.tail(n);

  const SamplingDistribution policy_dist =
      dreamer::rollout_distribution(heads, dreamer::lagrangian_step(model), z, H, position_sigma0(cfg, n));
  SamplingDistribution start = policy_dist;
  if (warm != nullptr) {
    const SamplingDistribution prev =
        cfg.anchor_warm ? anchor_warm(*warm, q0, qd0, warm_origin, model.dt()) : align_turns(shift_one_step(*warm), q0, heads.spec.angular);
    start = blend(prev, policy_dist, cfg.alpha);
  }

  PlanResult result;
  Diagnostics& diag = result.diag;
  double last_penalty = 0.0;
  auto score = [&](const Matrix& samples, Index S) {
    Matrix Q(n, S * (H + 1));
    for (Index s = 0; s < S; ++s) {
      Q.col(s * (H + 1)) = q0;
      Q.middleCols(s * (H + 1) + 1, H) = samples.middleCols(s * n, n).transpose();
    }
    const ScoreBatch b = score_batch(model, heads, Q, H, cfg, cfg.first_action_step == 0 ? &qd0 : nullptr);
    diag.rejected += b.rejected;
    diag.non_finite += b.non_finite;
    diag.model_columns += b.model_columns;
    last_penalty = b.root_penalty.mean();
    return b.returns;
  };
  result.final = detail::optimize(start, policy_dist, cfg, seed, score, diag);
  diag.mean_root_penalty = last_penalty;

  const auto& spec_limits = heads.spec.torque_limit;
  if (diag.fallback) {
    result.action = heads.act(z);
  } else {
    Matrix traj(n, H + 1);
    traj.col(0) = q0;
    traj.rightCols(H) = result.final.mu.transpose();
    result.action = extract_action(model, traj, qd0, cfg);
    if (!all_finite(result.action)) {
      result.action = heads.act(z);
      diag.fallback = true;
    }
  }
  result.action = result.action.cwiseMax(-spec_limits).cwiseMin(spec_limits);
  diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Batched z_{k+1} = d(z_k, a_k); columns are samples.
using BatchStepFn = std::function<Matrix(const Matrix&, const Matrix&)>;

template <lnn::LagrangianModel Model>
BatchStepFn lagrangian_batch_step(const Model& model) {
  return [&model](const Matrix& Z, const Matrix& A) -> Matrix {
    const Index n = model.dof();
    auto [q, qd] = lnn::step_batch(model, Z.topRows(n), Z.bottomRows(n), A);
    Matrix out(2 * n, Z.cols());
    out << q, qd;
    return out;
  };
}

/// Forward-dynamics sampling MPC over action sequences:
///   R = sum_{k<H} gamma^k r(z_k, a_k) + gamma^H V(z_H),  z_{k+1} = d(z_k, a_k).
inline PlanResult plan_forward(const BatchStepFn& step, const DreamerHeads& heads, const Vector& z,
                               const SamplingDistribution* warm, const PlannerConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Index m = heads.spec.m, H = cfg.H;
  require_dim(z.size(), 2 * heads.spec.n, "planner state");
  require(all_finite(z), ErrorKind::kInvalidArg, "planner state is not finite");
  const Vector limits = heads.spec.torque_limit;
  const dreamer::StepFn single = [&step](const Vector& s, const Vector& a) -> Vector { return step(s, a).col(0); };
  const SamplingDistribution policy_dist =
      dreamer::rollout_action_distribution(heads, single, z, H, cfg.sigma0_action_fraction * limits);
  SamplingDistribution start = policy_dist;
  if (warm != nullptr) start = blend(shift_one_step(*warm), policy_dist, cfg.alpha);

  PlanResult result;
  Diagnostics& diag = result.diag;
  auto score = [&](const Matrix& samples, Index S) {
    Matrix Z = z.replicate(1, S);
    Vector ret = Vector::Zero(S);
    double discount = 1.0;
    for (Index k = 0; k < H; ++k) {
      Matrix A(m, S);
      for (Index s = 0; s < S; ++s) A.col(s) = samples.block(k, s * m, 1, m).transpose();
      ret += discount * heads.reward_batch(Z, A).row(0).transpose();
      Z = step(Z, A);
      diag.model_columns += S;
      discount *= cfg.gamma;
    }
    ret += discount * heads.value_batch(Z).row(0).transpose();
    for (Index s = 0; s < S; ++s) {
      if (!std::isfinite(ret[s])) {
        ret[s] = -std::numeric_limits<double>::infinity();
        ++diag.non_finite;
      }
    }
    return ret;
  };
  result.final = detail::optimize(start, policy_dist, cfg, seed, score, diag);
  result.action = diag.fallback ? heads.act(z) : Vector(result.final.mu.row(0).transpose());
  result.action = result.action.cwiseMax(-limits).cwiseMin(limits);
  diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace lagmpc::planner
