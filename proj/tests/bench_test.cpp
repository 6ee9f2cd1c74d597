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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lagmpc/bench/closed_loop.hpp"
#include "lagmpc/bench/latency.hpp"
#include "lagmpc/bench/prediction.hpp"

namespace lagmpc {
namespace {

using sim::make_system;

sim::Dataset euler_dataset(const std::string& system, int episodes, int length) {
  sim::DatasetConfig dc;
  dc.episodes = episodes;
  dc.episode_length = length;
  dc.integrator = sim::Integrator::kEulerPaper;
  return sim::generate_dataset(make_system(system), dc);
}

bench::Stack untrained_stack(const std::string& system) {
  bench::Stack st;
  st.spec = make_system(system);
  zoo::ModelConfig mc;
  mc.hidden = {8, 8};
  st.dynamics = zoo::DynamicsModelHandle::create(zoo::Variant::kLnnFull, st.spec, mc, 1);
  st.heads = dreamer::DreamerHeads(st.spec, {8}, 1);
  return st;
}

TEST(Quantile, Examples) {
  EXPECT_EQ(bench::median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(bench::median({1.0, 2.0, 3.0, 4.0}), 2.5);
  EXPECT_EQ(bench::quantile({0.0, 10.0}, 0.95), 9.5);
  EXPECT_THROW(bench::median({}), Error);
}

TEST(Prediction, HorizonZeroIsZero) {
  const auto ds = euler_dataset("cartpole", 2, 30);
  const auto st = untrained_stack("cartpole");
  bench::PredictionConfig pc;
  pc.horizons = {0};
  const auto r = bench::bench_prediction({bench::predictor_for(st.dynamics, 0)}, ds, pc);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].value, 0.0);
}

TEST(Prediction, AnalyticModelIsExactUnderDiscreteTruth) {
  for (const char* sys : {"pendulum", "cartpole", "acrobot"}) {
    const auto ds = euler_dataset(sys, 2, 60);
    const sim::AnalyticModel model(make_system(sys));
    bench::PredictionConfig pc;
    pc.stride = 5;
    const auto r = bench::bench_prediction({bench::analytic_predictor(model)}, ds, pc);
    ASSERT_EQ(r.rows.size(), pc.horizons.size());
    for (const auto& row : r.rows) EXPECT_LE(row.value, 1e-10) << sys << " H=" << row.horizon;
  }
}

TEST(Prediction, SegmentsPastEpisodeEndAreCounted) {
  const auto ds = euler_dataset("pendulum", 2, 20);
  const sim::AnalyticModel model(make_system("pendulum"));
  bench::PredictionConfig pc;
  pc.horizons = {16};
  pc.stride = 5;
  // Starts 0, 5, 10, 15 per episode; only t = 0 fits 16 steps in 20.
  const auto r = bench::bench_prediction({bench::analytic_predictor(model)}, ds, pc);
  EXPECT_EQ(r.skipped, 2 * 3);
}

TEST(Prediction, ReducedModelsReportTheirOwnMetric) {
  const auto ds = euler_dataset("cartpole", 1, 30);
  auto st = untrained_stack("cartpole");
  zoo::ModelConfig mc;
  mc.hidden = {8, 8};
  const auto com = zoo::DynamicsModelHandle::create(zoo::Variant::kComLnn, st.spec, mc, 1);
  bench::PredictionConfig pc;
  pc.horizons = {1};
  const auto r = bench::bench_prediction({bench::predictor_for(com, 0)}, ds, pc);
  EXPECT_EQ(r.rows[0].metric, "mse_reduced");
  EXPECT_TRUE(std::isfinite(r.rows[0].value));
}

TEST(Return, AccountingAndSanityFloor) {
  const auto st = untrained_stack("pendulum");
  bench::ClosedLoopConfig cfg;
  cfg.episodes = 3;
  cfg.init = sim::InitMode::kHanging;  // full-length episodes: swing-up pays off late
  const auto r = bench::bench_return(
      st, {bench::ControllerKind::kExpert, bench::ControllerKind::kZero, bench::ControllerKind::kPolicyOnly}, cfg);
  EXPECT_EQ(r.rows.size(), 9u);
  const double expert = bench::median(r.values("expert", 0, "return"));
  const double zero = bench::median(r.values("zero", 0, "return"));
  EXPECT_LT(zero, expert);
}

TEST(Return, DeterministicIncludingPlanners) {
  const auto st = untrained_stack("cartpole");
  bench::ClosedLoopConfig cfg;
  cfg.episodes = 1;
  cfg.steps = 5;
  cfg.planner.H = 3;
  cfg.planner.N = 2;
  cfg.planner.M = 20;
  cfg.planner.M_pi = 4;
  cfg.planner.M_elite = 5;
  std::vector<bench::EpisodeResult> a, b;
  const std::vector<bench::ControllerKind> kinds{bench::ControllerKind::kInverse, bench::ControllerKind::kForward};
  bench::bench_return(st, kinds, cfg, &a);
  bench::bench_return(st, kinds, cfg, &b);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].undiscounted, b[i].undiscounted);
    for (std::size_t t = 0; t < a[i].log.size(); ++t) EXPECT_EQ(a[i].log[t].u, b[i].log[t].u);
  }
}

TEST(Return, InversePlannerRejectsReducedModels) {
  auto st = untrained_stack("cartpole");
  zoo::ModelConfig mc;
  mc.hidden = {8, 8};
  st.dynamics = zoo::DynamicsModelHandle::create(zoo::Variant::kComLnn, st.spec, mc, 1);
  bench::ClosedLoopConfig cfg;
  cfg.steps = 2;
  EXPECT_THROW(bench::run_episode(st, bench::ControllerKind::kInverse, cfg, 0), Error);
}

TEST(Latency, CallAccounting) {
  const auto st = untrained_stack("pendulum");
  planner::PlannerConfig pc;
  pc.M = 20;
  pc.M_pi = 2;
  pc.M_elite = 4;
  pc.N = 1;
  bench::LatencyConfig lc;
  lc.horizons = {2, 4};
  lc.calls = 3;
  lc.warmup = 1;
  const auto r = bench::bench_latency(st.dynamics.lnn, st.heads, pc, Matrix::Zero(2, 2), lc);
  EXPECT_EQ(r.values("inverse", 4, "timed_calls"), std::vector<double>{3.0});
  EXPECT_EQ(r.values("inverse", 2, "warmup_calls"), std::vector<double>{1.0});
  EXPECT_EQ(r.values("inverse/forward", 4, "latency_ratio").size(), 1u);
}

TEST(Report, CsvSchemaAndEmptyTimingColumns) {
  bench::BenchReport r;
  r.add({"prediction", "onn", 4, 2, "mse", 0.5});
  r.add({"latency", "inverse", 8, 0, "latency_ms", 1.0, 1.0, 2.0});
  const auto path = std::filesystem::temp_directory_path() / "lagmpc_report_test.csv";
  r.write_csv(path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(),
            std::string(bench::kBenchCsvHeader) + "\nprediction,onn,4,2,mse,0.5,,\nlatency,inverse,8,0,latency_ms,1,1,2\n");
  std::filesystem::remove(path);
}

TEST(Stack, SaveLoadRoundTrip) {
  auto st = untrained_stack("cartpole");
  st.encoder = dreamer::Encoder(st.spec, 3, {8}, 2);
  const auto dir = std::filesystem::temp_directory_path() / "lagmpc_stack_test";
  st.save(dir);
  const auto back = bench::Stack::load(dir);
  ASSERT_TRUE(back.encoder.has_value());
  EXPECT_EQ(back.encoder->history, 3);
  const Matrix Z = Matrix::Random(4, 3);
  const Matrix U = Matrix::Random(1, 3);
  EXPECT_EQ(back.dynamics.step_batch(Z, U), st.dynamics.step_batch(Z, U));
  EXPECT_EQ(back.heads.policy_batch(Z), st.heads.policy_batch(Z));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(bench::Stack::load(dir), Error);
}

}  // namespace
}  // namespace lagmpc
