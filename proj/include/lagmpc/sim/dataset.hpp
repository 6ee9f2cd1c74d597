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

// Expert-generated transition datasets.
//
// On disk a dataset is a directory holding
//   records.ndjson   one JSON object per transition
//   manifest.json    generation parameters and counts

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lagmpc/sim/expert.hpp"

namespace lagmpc::sim {

/// One transition with everything the learners need:
/// (o_{t-M+1..t}, a_expert, r_t, z_{t+1}, V_t) plus the applied input and
/// the true acceleration for inverse-dynamics supervision.
struct TransitionRecord {
  int episode = 0;
  int t = 0;
  Vector obs_history;  // M_hist observations, oldest first, flattened
  bool history_complete = false;
  Vector expert_action;  // clean expert output (policy target)
  Vector u;              // applied input after exploration noise and clipping
  double reward = 0.0;
  Vector state;       // z_t = [q; qdot], unwrapped within the episode
  Vector next_state;  // z_{t+1}, same unwrapping
  Vector qddot;       // true acceleration at (z_t, u_t)
  double value_target = 0.0;
  Vector command;
};

struct DatasetConfig {
  int episodes = 100;
  int episode_length = 500;
  std::uint64_t seed = 0;
  double noise_fraction = 0.1;  // exploration sigma as a fraction of torque limit
  int history = 5;              // M_hist
  double gamma = 0.99;
  Integrator integrator = Integrator::kRk4;
  InitMode init = InitMode::kUniform;
};

struct Dataset {
  SystemSpec spec;
  DatasetConfig config;
  std::vector<TransitionRecord> records;

  // Records of one episode are contiguous and ordered by t.
  std::vector<std::pair<std::size_t, std::size_t>> episode_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= records.size(); ++i) {
      if (i == records.size() || records[i].episode != records[start].episode) {
        ranges.emplace_back(start, i);
        start = i;
      }
    }
    return ranges;
  }
};

/// Runs one expert episode under the configured truth integrator. The
/// episode's noise stream depends only on (seed, episode index).
inline std::vector<TransitionRecord> generate_episode(const SystemSpec& spec, const Expert& expert,
                                                      const DatasetConfig& cfg, int episode) {
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(episode));
  GeneralizedState z = initial_state(spec, rng, cfg.init);
  const Vector command = spec.target;
  const Vector sigma = cfg.noise_fraction * spec.torque_limit;
  const Index p = observation_dim(spec);

  std::vector<TransitionRecord> out;
  out.reserve(cfg.episode_length);
  std::vector<Vector> observations;
  Vector prev_action = Vector::Zero(spec.m);
  for (int t = 0; t < cfg.episode_length; ++t) {
    observations.push_back(observation(spec, z, prev_action, command));
    TransitionRecord rec;
    rec.episode = episode;
    rec.t = t;
    rec.obs_history = Vector::Zero(p * cfg.history);
    rec.history_complete = t + 1 >= cfg.history;
    for (int k = 0; k < cfg.history; ++k) {
      const int idx = std::max(0, t + 1 - cfg.history + k);
      rec.obs_history.segment(k * p, p) = observations[idx];
    }
    rec.expert_action = expert.action(z, command);
    Vector noisy = rec.expert_action;
    if (cfg.noise_fraction > 0.0) {
      for (Index j = 0; j < spec.m; ++j) noisy[j] += sigma[j] * standard_normal(rng);
    }
    rec.u = clip_action(spec, noisy);
    rec.reward = reward(spec, z, rec.u, command);
    rec.state = z.stacked();
    rec.qddot = true_dynamics(spec, z.q, z.qdot, rec.u);
    z = simulate_step(spec, z, rec.u, cfg.integrator);
    rec.next_state = z.stacked();
    rec.command = command;
    prev_action = rec.u;
    out.push_back(std::move(rec));
  }
  // Discounted Monte Carlo returns, truncated at the episode end.
  double running = 0.0;
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    running = it->reward + cfg.gamma * running;
    it->value_target = running;
  }
  return out;
}

inline Dataset generate_dataset(const SystemSpec& spec, const DatasetConfig& cfg) {
  require(cfg.episodes >= 1, ErrorKind::kInvalidArg, "generate_dataset needs at least one episode");
  require(cfg.episode_length >= 1 && cfg.history >= 1, ErrorKind::kInvalidArg,
          "episode length and history must be positive");
  Dataset ds{spec, cfg, {}};
  ds.spec.episode_length = cfg.episode_length;
  const Expert expert(spec);
  ds.records.reserve(static_cast<std::size_t>(cfg.episodes) * cfg.episode_length);
  for (int e = 0; e < cfg.episodes; ++e) {
    auto ep = generate_episode(spec, expert, cfg, e);
    ds.records.insert(ds.records.end(), std::make_move_iterator(ep.begin()), std::make_move_iterator(ep.end()));
  }
  return ds;
}

// ---- serialization ----

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

inline nlohmann::json to_json(const TransitionRecord& r) {
  return {{"episode", r.episode},
          {"t", r.t},
          {"obs_history", to_json(r.obs_history)},
          {"history_complete", r.history_complete},
          {"expert_action", to_json(r.expert_action)},
          {"u", to_json(r.u)},
          {"reward", r.reward},
          {"state", to_json(r.state)},
          {"next_state", to_json(r.next_state)},
          {"qddot", to_json(r.qddot)},
          {"value_target", r.value_target},
          {"command", to_json(r.command)}};
}

inline TransitionRecord record_from_json(const nlohmann::json& j) {
  TransitionRecord r;
  r.episode = j.at("episode").get<int>();
  r.t = j.at("t").get<int>();
  r.obs_history = vector_from_json(j.at("obs_history"));
  r.history_complete = j.at("history_complete").get<bool>();
  r.expert_action = vector_from_json(j.at("expert_action"));
  r.u = vector_from_json(j.at("u"));
  r.reward = j.at("reward").get<double>();
  r.state = vector_from_json(j.at("state"));
  r.next_state = vector_from_json(j.at("next_state"));
  r.qddot = vector_from_json(j.at("qddot"));
  r.value_target = j.at("value_target").get<double>();
  r.command = vector_from_json(j.at("command"));
  return r;
}

inline nlohmann::json manifest_json(const Dataset& ds) {
  const SystemSpec& s = ds.spec;
  return {{"format", "lagmpc-dataset"},
          {"version", 1},
          {"system", s.name},
          {"dof", s.n},
          {"actuated", s.m},
          {"dt", s.dt},
          {"gravity", s.gravity},
          {"masses", {s.mass1, s.mass2}},
          {"lengths", {s.length1, s.length2}},
          {"torque_limit", to_json(s.torque_limit)},
          {"damping", to_json(s.damping)},
          {"seed", ds.config.seed},
          {"episodes", ds.config.episodes},
          {"episode_length", ds.config.episode_length},
          {"noise_fraction", ds.config.noise_fraction},
          {"history", ds.config.history},
          {"gamma", ds.config.gamma},
          {"integrator", to_string(ds.config.integrator)},
          {"init", to_string(ds.config.init)},
          {"records", ds.records.size()}};
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "records.ndjson");
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (dir / "records.ndjson").string());
    for (const auto& r : ds.records) out << to_json(r).dump() << "\n";
  }
  std::ofstream manifest(dir / "manifest.json");
  require(static_cast<bool>(manifest), ErrorKind::kIo, "cannot write " + (dir / "manifest.json").string());
  manifest << manifest_json(ds).dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto records_path = dir / "records.ndjson";
  require(std::filesystem::exists(manifest_path), ErrorKind::kIo, "missing dataset manifest " + manifest_path.string());
  require(std::filesystem::exists(records_path), ErrorKind::kIo, "missing dataset records " + records_path.string());
  nlohmann::json m;
  {
    std::ifstream in(manifest_path);
    in >> m;
  }
  Dataset ds;
  ds.spec = make_system(m.at("system").get<std::string>());
  ds.spec.dt = m.at("dt").get<double>();
  ds.spec.gravity = m.at("gravity").get<double>();
  ds.spec.mass1 = m.at("masses")[0].get<double>();
  ds.spec.mass2 = m.at("masses")[1].get<double>();
  ds.spec.length1 = m.at("lengths")[0].get<double>();
  ds.spec.length2 = m.at("lengths")[1].get<double>();
  ds.spec.torque_limit = vector_from_json(m.at("torque_limit"));
  ds.spec.damping = vector_from_json(m.at("damping"));
  ds.config.seed = m.at("seed").get<std::uint64_t>();
  ds.config.episodes = m.at("episodes").get<int>();
  ds.config.episode_length = m.at("episode_length").get<int>();
  ds.spec.episode_length = ds.config.episode_length;
  ds.config.noise_fraction = m.at("noise_fraction").get<double>();
  ds.config.history = m.at("history").get<int>();
  ds.config.gamma = m.at("gamma").get<double>();
  ds.config.integrator = integrator_from_string(m.at("integrator").get<std::string>());
  ds.config.init = init_mode_from_string(m.at("init").get<std::string>());
  std::ifstream in(records_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  require(ds.records.size() == m.at("records").get<std::size_t>(), ErrorKind::kIo,
          "dataset record count does not match manifest in " + dir.string());
  return ds;
}

}  // namespace lagmpc::sim
