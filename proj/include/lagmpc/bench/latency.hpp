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

// Wall-clock per plan call for both planners on the same model.

#include "lagmpc/bench/report.hpp"
#include "lagmpc/planner/planner.hpp"

namespace lagmpc::bench {

struct LatencyConfig {
  std::vector<Index> horizons{4, 8, 12, 16};
  int calls = 100;   // timed calls per planner and horizon
  int warmup = 10;   // discarded calls before timing
  std::uint64_t seed = 0;
};

/// Calls alternate between the planners on the same start state so that
/// slow drift in the machine affects both equally. Rows per horizon:
/// latency_ms for each planner (value = median), the inverse/forward ratio
/// of medians, and the call accounting.
template <lnn::LagrangianModel Model>
BenchReport bench_latency(const Model& model, const dreamer::DreamerHeads& heads, const planner::PlannerConfig& base,
                          const Matrix& start_states, const LatencyConfig& cfg) {
  require(cfg.calls >= 1 && cfg.warmup >= 0, ErrorKind::kConfig, "latency.calls must be >= 1");
  require(start_states.cols() >= 1, ErrorKind::kInvalidArg, "bench_latency needs start states");
  const planner::BatchStepFn fwd = planner::lagrangian_batch_step(model);
  BenchReport report;
  for (Index H : cfg.horizons) {
    planner::PlannerConfig pc = base;
    pc.H = H;
    planner::validate(pc);
    std::vector<double> inv_ms, fwd_ms;
    for (int call = 0; call < cfg.warmup + cfg.calls; ++call) {
      const Vector z = start_states.col(call % start_states.cols());
      const std::uint64_t s = stream_seed(cfg.seed, static_cast<std::uint64_t>(call));
      const double a = planner::plan_inverse(model, heads, z, nullptr, pc, s).diag.wall_ms;
      const double b = planner::plan_forward(fwd, heads, z, nullptr, pc, s).diag.wall_ms;
      if (call >= cfg.warmup) {
        inv_ms.push_back(a);
        fwd_ms.push_back(b);
      }
    }
    const double mi = median(inv_ms), mf = median(fwd_ms);
    report.add({"latency", "inverse", H, cfg.seed, "latency_ms", mi, mi, quantile(inv_ms, 0.95)});
    report.add({"latency", "forward", H, cfg.seed, "latency_ms", mf, mf, quantile(fwd_ms, 0.95)});
    report.add({"latency", "inverse/forward", H, cfg.seed, "latency_ratio", mi / mf});
    report.add({"latency", "inverse", H, cfg.seed, "timed_calls", static_cast<double>(inv_ms.size())});
    report.add({"latency", "inverse", H, cfg.seed, "warmup_calls", static_cast<double>(cfg.warmup)});
  }
  return report;
}

}  // namespace lagmpc::bench
