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

// Closed-loop episodes against the simulator, one controller at a time.

#include <deque>

#include "lagmpc/bench/report.hpp"
#include "lagmpc/bench/stack.hpp"
#include "lagmpc/planner/planner.hpp"
#include "lagmpc/sim/expert.hpp"

namespace lagmpc::bench {

enum class ControllerKind { kInverse, kForward, kPolicyOnly, kExpert, kZero };

inline std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kInverse: return "inverse";
    case ControllerKind::kForward: return "forward";
    case ControllerKind::kPolicyOnly: return "policy-only";
    case ControllerKind::kExpert: return "expert";
    case ControllerKind::kZero: return "zero";
  }
  return "?";
}

inline ControllerKind controller_from_string(const std::string& s) {
  for (auto k : {ControllerKind::kInverse, ControllerKind::kForward, ControllerKind::kPolicyOnly,
                 ControllerKind::kExpert, ControllerKind::kZero})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::kConfig, "unknown planner '" + s + "' (inverse|forward|policy-only|expert|zero)");
}

struct ClosedLoopConfig {
  int episodes = 20;
  int steps = 0;  // 0 means the system's episode length
  std::uint64_t seed = 0;
  sim::InitMode init = sim::InitMode::kUniform;
  sim::Integrator integrator = sim::Integrator::kRk4;
  bool use_encoder = true;  // estimate z from observations once the window is full
  bool warm_start = true;
  double gamma = 0.99;
  planner::PlannerConfig planner;
};

struct StepLog {
  int t = 0;
  Vector u;
  double reward = 0.0;
  double plan_ms = 0.0;
  double best_return = std::nan("");
  double root_penalty = std::nan("");
  bool fallback = false;
  double estimate_error = 0.0;  // |z_hat - z| in canonical coordinates
};

struct EpisodeResult {
  int episode = 0;
  ControllerKind controller = ControllerKind::kZero;
  double undiscounted = 0.0;
  double discounted = 0.0;
  int steps = 0;
  bool diverged = false;
  std::vector<StepLog> log;
};

inline EpisodeResult run_episode(const Stack& stack, ControllerKind kind, const ClosedLoopConfig& cfg, int episode) {
  const auto& spec = stack.spec;
  const int T = cfg.steps > 0 ? cfg.steps : spec.episode_length;
  if (kind == ControllerKind::kInverse)
    require(stack.dynamics.is_lagrangian() && !stack.dynamics.uses_com(), ErrorKind::kUnsupported,
            "the inverse planner needs a full-state Lagrangian model, not " + zoo::to_string(stack.dynamics.variant));
  if (kind == ControllerKind::kForward)
    require(!stack.dynamics.uses_com(), ErrorKind::kUnsupported, "the forward planner needs a full-state model");

  // Initial states depend only on (seed, episode), so controllers are paired.
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(episode));
  lnn::GeneralizedState z = sim::initial_state(spec, rng, cfg.init);
  const Vector command = spec.target;
  const sim::Expert expert(spec);
  const Index hist = stack.encoder ? stack.encoder->history : 1;
  const Index p = sim::observation_dim(spec);
  std::deque<Vector> window;
  Vector prev_action = Vector::Zero(spec.m);
  std::optional<planner::SamplingDistribution> warm;
  Vector warm_origin;  // position the warm plan was made from
  const planner::BatchStepFn forward_step = [&stack](const Matrix& S, const Matrix& U) {
    return stack.dynamics.step_batch(S, U);
  };

  EpisodeResult res;
  res.episode = episode;
  res.controller = kind;
  double discount = 1.0;
  for (int t = 0; t < T; ++t) {
    window.push_back(sim::observation(spec, z, prev_action, command));
    if (static_cast<Index>(window.size()) > hist) window.pop_front();
    const Vector z_true = sim::canonical_state(spec, z.stacked());
    Vector z_hat = z_true;
    if (cfg.use_encoder && stack.encoder && static_cast<Index>(window.size()) == hist) {
      Vector obs(p * hist);
      for (Index k = 0; k < hist; ++k) obs.segment(k * p, p) = window[k];
      z_hat = stack.encoder->encode(obs);
    }
    StepLog log;
    log.t = t;
    log.estimate_error = zoo::state_difference(z_hat, z_true, spec.angular).norm();
    const std::uint64_t plan_seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(episode) * 1000003ULL + t);
    const planner::SamplingDistribution* prev = cfg.warm_start && warm ? &*warm : nullptr;
    planner::PlanResult plan;
    switch (kind) {
      case ControllerKind::kInverse:
        plan = planner::plan_inverse(stack.dynamics.lnn, stack.heads, z_hat, prev, cfg.planner, plan_seed,
                                     prev != nullptr ? &warm_origin : nullptr);
        break;
      case ControllerKind::kForward:
        plan = planner::plan_forward(forward_step, stack.heads, z_hat, prev, cfg.planner, plan_seed);
        break;
      case ControllerKind::kPolicyOnly:
        plan.action = sim::clip_action(spec, stack.heads.act(z_hat));
        break;
      case ControllerKind::kExpert:
        plan.action = sim::clip_action(spec, expert.action(z, command));
        break;
      case ControllerKind::kZero:
        plan.action = Vector::Zero(spec.m);
        break;
    }
    if (kind == ControllerKind::kInverse || kind == ControllerKind::kForward) {
      warm = plan.final;
      warm_origin = z_hat.head(spec.n);
      log.plan_ms = plan.diag.wall_ms;
      log.best_return = plan.diag.best_return;
      log.root_penalty = plan.diag.mean_root_penalty;
      log.fallback = plan.diag.fallback;
    }
    log.u = plan.action;
    log.reward = sim::reward(spec, z, plan.action, command);
    z = sim::simulate_step(spec, z, plan.action, cfg.integrator);
    prev_action = plan.action;
    if (!all_finite(z.stacked()) || !std::isfinite(log.reward)) {
      res.diverged = true;
      res.log.push_back(log);
      break;
    }
    res.undiscounted += log.reward;
    res.discounted += discount * log.reward;
    discount *= cfg.gamma;
    res.log.push_back(std::move(log));
    ++res.steps;
  }
  return res;
}

/// One "return" row per (controller, episode); seed holds the episode index.
/// Diverged episodes keep their partial return and are flagged in notes.
inline BenchReport bench_return(const Stack& stack, const std::vector<ControllerKind>& controllers,
                                const ClosedLoopConfig& cfg, std::vector<EpisodeResult>* episodes = nullptr) {
  require(cfg.episodes >= 1, ErrorKind::kConfig, "rollout.episodes must be >= 1");
  planner::validate(cfg.planner);
  BenchReport report;
  for (ControllerKind kind : controllers) {
    for (int e = 0; e < cfg.episodes; ++e) {
      EpisodeResult r = run_episode(stack, kind, cfg, e);
      std::vector<double> ms;
      for (const auto& s : r.log)
        if (s.plan_ms > 0.0) ms.push_back(s.plan_ms);
      BenchRow row{"return", to_string(kind), kind == ControllerKind::kInverse || kind == ControllerKind::kForward
                                                  ? cfg.planner.H
                                                  : 0,
                   static_cast<std::uint64_t>(e), "return", r.undiscounted};
      if (!ms.empty()) {
        row.wall_ms_median = median(ms);
        row.wall_ms_p95 = quantile(ms, 0.95);
      }
      report.add(row);
      if (r.diverged) {
        ++report.skipped;
        report.notes.push_back(to_string(kind) + " episode " + std::to_string(e) + " diverged at t=" +
                               std::to_string(r.steps));
      }
      if (episodes) episodes->push_back(std::move(r));
    }
  }
  return report;
}

/// Per-episode returns (both forms) and per-step diagnostics as CSV.
inline void write_episode_csv(const std::vector<EpisodeResult>& eps, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "planner,episode,return,discounted_return,steps,diverged\n";
  for (const auto& e : eps)
    out << to_string(e.controller) << "," << e.episode << "," << e.undiscounted << "," << e.discounted << ","
        << e.steps << "," << (e.diverged ? 1 : 0) << "\n";
}

inline void write_steps_csv(const std::vector<EpisodeResult>& eps, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "planner,episode,t,reward,u,best_return,root_penalty,fallback,estimate_error,plan_ms\n";
  for (const auto& e : eps)
    for (const auto& s : e.log) {
      out << to_string(e.controller) << "," << e.episode << "," << s.t << "," << s.reward << ",";
      for (Index i = 0; i < s.u.size(); ++i) out << (i ? ";" : "") << s.u[i];
      out << "," << s.best_return << "," << s.root_penalty << "," << (s.fallback ? 1 : 0) << "," << s.estimate_error
          << "," << s.plan_ms << "\n";
    }
}

}  // namespace lagmpc::bench
