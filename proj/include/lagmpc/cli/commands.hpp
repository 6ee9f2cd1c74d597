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

// Subcommand pipelines. Each takes a resolved config, writes its outputs
// plus the resolved config and a provenance stamp, and returns a one-line
// summary for the terminal.

#include <iostream>

#include "lagmpc/cli/config.hpp"
#include "lagmpc/train/dreamer_train.hpp"

#ifndef LAGMPC_VERSION
#define LAGMPC_VERSION "0.0.0-dev"
#endif

namespace lagmpc::cli {

inline const std::vector<std::string> kSubcommands{"gen-data",         "train",         "rollout",
                                                   "bench-prediction", "bench-latency", "bench-return"};

inline std::filesystem::path path_of(const json& c, const char* key) {
  return std::filesystem::path(c["paths"][key].get<std::string>());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

/// Resolved config and a stamp of what produced the run. Nothing here
/// depends on the clock, so repeated runs write identical files.
inline void write_provenance(const json& c, const std::string& subcommand, const std::filesystem::path& dir,
                             const std::string& stem = "") {
  const std::string prefix = stem.empty() ? "" : stem + ".";
  write_text(dir / (prefix + "config.json"), c.dump(2) + "\n");
  json stamp = {{"tool", "lagmpc"},
                {"version", LAGMPC_VERSION},
                {"subcommand", subcommand},
                {"seed", c["seed"]},
                {"schema_version", kSchemaVersion},
                {"compiler", __VERSION__}};
  write_text(dir / (prefix + "provenance.json"), stamp.dump(2) + "\n");
}

/// For bench outputs: paths.out is either the CSV file itself or a
/// directory that receives <default_name>.
inline std::filesystem::path csv_target(const json& c, const std::string& default_name) {
  const auto p = path_of(c, "out");
  return p.extension() == ".csv" ? p : p / default_name;
}

inline void write_bench(const bench::BenchReport& r, const json& c, const std::string& sub,
                        const std::filesystem::path& csv) {
  r.write_csv(csv);
  const auto stem = csv.stem().string();
  const auto dir = csv.has_parent_path() ? csv.parent_path() : std::filesystem::path(".");
  r.write_summary_csv(dir / (stem + ".summary.csv"));
  write_provenance(c, sub, dir, stem);
}

inline sim::SystemSpec system_of(const json& c) { return sim::make_system(c["system"].get<std::string>()); }

inline void check_system(const json& c, const sim::SystemSpec& found, const std::string& where) {
  const auto want = c["system"].get<std::string>();
  require(found.name == want, ErrorKind::kConfig,
          where + " holds system '" + found.name + "' but the config asks for '" + want + "'");
}

// ---- gen-data ----

inline std::string run_gen_data(const json& c) {
  const auto dir = path_of(c, "data");
  const sim::Dataset ds = sim::generate_dataset(system_of(c), dataset_config(c));
  sim::save_dataset(ds, dir);
  write_provenance(c, "gen-data", dir);
  return "wrote " + std::to_string(ds.records.size()) + " records to " + dir.string();
}

// ---- train ----

struct TrainedStack {
  bench::Stack stack;
  train::LossReport report;
};

inline TrainedStack train_stack(const json& c, const sim::Dataset& ds) {
  const auto tcfg = train_config(c);
  const std::uint64_t seed = c["seed"].get<std::uint64_t>();
  const zoo::Transitions tr = zoo::make_transitions(ds);
  TrainedStack out;
  bench::Stack& st = out.stack;
  st.spec = ds.spec;
  st.dynamics = zoo::DynamicsModelHandle::create(zoo::variant_from_string(c["model"]["variant"].get<std::string>()),
                                                 ds.spec, model_config(c), seed);
  out.report.append(train::train_dynamics(st.dynamics, tr, tcfg));
  st.heads = dreamer::DreamerHeads(ds.spec, index_list(c["heads"]["hidden"]), seed);
  out.report.append(train::train_heads(st.heads, tr, tcfg));
  if (c["encoder"]["enabled"].get<bool>()) {
    dreamer::Encoder enc(ds.spec, ds.config.history, index_list(c["encoder"]["hidden"]), seed);
    out.report.append(train::train_encoder(enc, tr, tcfg));
    st.encoder = std::move(enc);
  }
  return out;
}

inline std::string run_train(const json& c) {
  const sim::Dataset ds = sim::load_dataset(path_of(c, "data"));
  check_system(c, ds.spec, "dataset " + path_of(c, "data").string());
  const TrainedStack t = train_stack(c, ds);
  const auto dir = path_of(c, "ckpt");
  t.stack.save(dir);
  t.report.write_csv(dir / "loss.csv");
  write_provenance(c, "train", dir);
  std::ostringstream msg;
  msg << "trained " << c["model"]["variant"].get<std::string>() << " stack on " << ds.records.size()
      << " records (" << t.report.iterations << " iterations, " << t.report.iteration_ms << " ms each, "
      << t.report.skipped_records << " records without full history skipped by the encoder) -> " << dir.string();
  return msg.str();
}

// ---- rollout ----

inline bench::Stack load_stack(const json& c) {
  bench::Stack st = bench::Stack::load(path_of(c, "ckpt"));
  check_system(c, st.spec, "checkpoint " + path_of(c, "ckpt").string());
  return st;
}

inline std::string run_rollout(const json& c) {
  const bench::Stack st = load_stack(c);
  const auto kind = bench::controller_from_string(c["rollout"]["planner"].get<std::string>());
  const auto cl = closed_loop_config(c, st.spec.n);
  std::vector<bench::EpisodeResult> eps;
  const bench::BenchReport r = bench::bench_return(st, {kind}, cl, &eps);
  const auto dir = path_of(c, "out");
  r.write_csv(dir / "returns.csv");
  bench::write_episode_csv(eps, dir / "episodes.csv");
  bench::write_steps_csv(eps, dir / "steps.csv");
  write_provenance(c, "rollout", dir);
  std::vector<double> rets;
  for (const auto& e : eps) rets.push_back(e.undiscounted);
  std::ostringstream msg;
  msg << bench::to_string(kind) << ": " << eps.size() << " episodes, median return " << bench::median(rets)
      << ", " << r.skipped << " diverged -> " << dir.string();
  return msg.str();
}

// ---- benches ----

/// Last `holdout` episodes are held out for evaluation.
inline std::pair<sim::Dataset, sim::Dataset> split_episodes(const sim::Dataset& ds, int holdout) {
  const auto ranges = ds.episode_ranges();
  require(static_cast<int>(ranges.size()) > holdout, ErrorKind::kConfig,
          "bench.holdout_episodes (" + std::to_string(holdout) + ") leaves no training episodes out of " +
              std::to_string(ranges.size()));
  sim::Dataset train_ds{ds.spec, ds.config, {}}, test_ds{ds.spec, ds.config, {}};
  const std::size_t cut = ranges[ranges.size() - holdout].first;
  train_ds.records.assign(ds.records.begin(), ds.records.begin() + cut);
  test_ds.records.assign(ds.records.begin() + cut, ds.records.end());
  train_ds.config.episodes = static_cast<int>(ranges.size()) - holdout;
  test_ds.config.episodes = holdout;
  return {train_ds, test_ds};
}

inline bench::BenchReport prediction_report(const json& c, const sim::Dataset& ds, std::ostream* log = nullptr) {
  auto [train_ds, test_ds] = split_episodes(ds, c["bench"]["holdout_episodes"].get<int>());
  const zoo::Transitions tr = zoo::make_transitions(train_ds);
  bench::PredictionConfig pc;
  pc.horizons = index_list(c["bench"]["prediction_horizons"]);
  pc.stride = c["bench"]["stride"].get<Index>();
  bench::BenchReport report;
  for (const auto& sj : c["bench"]["seeds"]) {
    const auto seed = sj.get<std::uint64_t>();
    for (const auto& vj : c["bench"]["variants"]) {
      auto h = zoo::DynamicsModelHandle::create(zoo::variant_from_string(vj.get<std::string>()), ds.spec,
                                                model_config(c), seed);
      auto tcfg = train_config(c);
      tcfg.seed = seed;
      const auto lr = train::train_dynamics(h, tr, tcfg);
      if (log)
        *log << vj.get<std::string>() << " seed " << seed << ": " << h.parameter_count() << " params, final loss "
             << lr.rows.back().value << ", " << lr.iteration_ms << " ms/iteration\n";
      report.append(bench::bench_prediction({bench::predictor_for(h, seed)}, test_ds, pc));
    }
  }
  if (c["bench"]["include_analytic"].get<bool>()) {
    const sim::AnalyticModel model(ds.spec, c["model"]["half_step"].get<bool>());
    report.append(bench::bench_prediction({bench::analytic_predictor(model)}, test_ds, pc));
  }
  return report;
}

inline std::string run_bench_prediction(const json& c) {
  const sim::Dataset ds = sim::load_dataset(path_of(c, "data"));
  check_system(c, ds.spec, "dataset " + path_of(c, "data").string());
  const bench::BenchReport r = prediction_report(c, ds, &std::cerr);
  const auto csv = csv_target(c, "prediction.csv");
  write_bench(r, c, "bench-prediction", csv);
  return std::to_string(r.rows.size()) + " rows (" + std::to_string(r.skipped) + " segments skipped) -> " +
         csv.string();
}

inline Matrix latency_start_states(const sim::SystemSpec& spec, const json& c, Index count) {
  Rng rng = make_rng(c["seed"].get<std::uint64_t>(), 0x6c6174);
  const auto mode = sim::init_mode_from_string(c["rollout"]["init"].get<std::string>());
  Matrix S(2 * spec.n, count);
  for (Index i = 0; i < count; ++i) S.col(i) = sim::canonical_state(spec, sim::initial_state(spec, rng, mode).stacked());
  return S;
}

inline std::string run_bench_latency(const json& c) {
  const bench::Stack st = load_stack(c);
  require(st.dynamics.is_lagrangian() && !st.dynamics.uses_com(), ErrorKind::kUnsupported,
          "bench-latency needs a full-state Lagrangian checkpoint, not " + zoo::to_string(st.dynamics.variant));
  bench::LatencyConfig lc;
  lc.horizons = index_list(c["bench"]["latency_horizons"]);
  lc.calls = c["bench"]["calls"].get<int>();
  lc.warmup = c["bench"]["warmup"].get<int>();
  lc.seed = c["seed"].get<std::uint64_t>();
  const bench::BenchReport r = bench::bench_latency(st.dynamics.lnn, st.heads, planner_config(c, st.spec.n),
                                                    latency_start_states(st.spec, c, 10), lc);
  const auto csv = csv_target(c, "latency.csv");
  write_bench(r, c, "bench-latency", csv);
  std::ostringstream msg;
  for (const auto& row : r.rows)
    if (row.metric == "latency_ratio") msg << "H=" << row.horizon << " inverse/forward=" << row.value << " ";
  msg << "-> " << csv.string();
  return msg.str();
}

inline std::string run_bench_return(const json& c) {
  const bench::Stack st = load_stack(c);
  std::vector<bench::ControllerKind> kinds;
  for (const auto& p : c["bench"]["planners"]) kinds.push_back(bench::controller_from_string(p.get<std::string>()));
  std::vector<bench::EpisodeResult> eps;
  const bench::BenchReport r = bench::bench_return(st, kinds, closed_loop_config(c, st.spec.n), &eps);
  const auto csv = csv_target(c, "return.csv");
  write_bench(r, c, "bench-return", csv);
  const auto dir = csv.has_parent_path() ? csv.parent_path() : std::filesystem::path(".");
  bench::write_episode_csv(eps, dir / (csv.stem().string() + ".episodes.csv"));
  std::ostringstream msg;
  for (auto k : kinds) msg << bench::to_string(k) << " median " << bench::median(r.values(bench::to_string(k),
                                                      k == bench::ControllerKind::kInverse ||
                                                              k == bench::ControllerKind::kForward
                                                          ? c["planner"]["H"].get<Index>()
                                                          : 0,
                                                      "return"))
                           << "; ";
  msg << "-> " << csv.string();
  return msg.str();
}

inline std::string dispatch(const std::string& sub, const json& c) {
  if (sub == "gen-data") return run_gen_data(c);
  if (sub == "train") return run_train(c);
  if (sub == "rollout") return run_rollout(c);
  if (sub == "bench-prediction") return run_bench_prediction(c);
  if (sub == "bench-latency") return run_bench_latency(c);
  if (sub == "bench-return") return run_bench_return(c);
  throw Error(ErrorKind::kInvalidArg, "unknown subcommand '" + sub + "'");
}

}  // namespace lagmpc::cli
