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

// Run configuration: a JSON tree of defaults, overlaid by an optional file
// and then by dotted command-line overrides. The defaults define the schema;
// any key they do not contain is rejected.

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "lagmpc/bench/closed_loop.hpp"
#include "lagmpc/bench/latency.hpp"
#include "lagmpc/bench/prediction.hpp"
#include "lagmpc/sim/dataset.hpp"
#include "lagmpc/train/trainer.hpp"

namespace lagmpc::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json default_config() {
  return json::parse(R"({
    "schema_version": 1,
    "system": "pendulum",
    "seed": 0,
    "workers": 1,
    "paths": {"data": "data", "ckpt": "ckpt", "out": "runs"},
    "data": {
      "episodes": 100, "episode_length": 500, "noise_fraction": 0.1, "history": 5,
      "gamma": 0.99, "integrator": "rk4", "init": "uniform"
    },
    "model": {
      "variant": "lnn_diag", "hidden": [256, 256], "eps": 0.0001, "half_step": false,
      "use_external": true, "onn_residual": true, "onn_match_params": true, "fd_targets": false
    },
    "heads": {"hidden": [256, 256]},
    "encoder": {"enabled": true, "hidden": [256, 256]},
    "train": {"lr": 0.0003, "batch_size": 256, "epochs": 20, "clip_norm": 1.0, "critic_tail": 0.05},
    "planner": {
      "H": 8, "N": 6, "M": 500, "M_pi": 30, "M_elite": 60,
      "gamma": 0.99, "beta": 0.95, "alpha": 0.5, "lambda": 1.0,
      "sigma0": 0.05, "sigma_min": 0.0001, "sigma0_action_fraction": 0.1,
      "root_reject_threshold": 0.0, "common_random_numbers": false, "carry_elites": false,
      "anchor_warm": true, "first_action_step": 0, "clip_actuation": true
    },
    "rollout": {
      "planner": "inverse", "episodes": 20, "steps": 0, "init": "uniform", "integrator": "rk4",
      "use_encoder": true, "warm_start": true
    },
    "bench": {
      "variants": ["lnn_diag", "onn"], "seeds": [0, 1, 2, 3, 4], "holdout_episodes": 10,
      "prediction_horizons": [1, 2, 4, 8, 16], "stride": 10, "include_analytic": false,
      "latency_horizons": [4, 8, 12, 16], "calls": 100, "warmup": 10,
      "planners": ["inverse", "forward", "policy-only"]
    }
  })");
}

namespace detail {

inline std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline bool same_kind(const json& schema, const json& v) {
  if (schema.is_number_integer()) return v.is_number_integer();
  if (schema.is_number()) return v.is_number();
  if (schema.is_boolean()) return v.is_boolean();
  if (schema.is_string()) return v.is_string();
  if (schema.is_array()) return v.is_array() || (schema.size() > 0 && schema[0].is_number() && v.is_number());
  if (schema.is_object()) return v.is_object();
  return false;
}

// Recursively merges `overlay` into `base`, rejecting keys absent from the
// schema and values of the wrong kind.
inline void merge(json& base, const json& overlay, const std::string& prefix) {
  require(overlay.is_object(), ErrorKind::kConfig, "config section '" + prefix + "' must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = join_key(prefix, it.key());
    require(base.contains(it.key()), ErrorKind::kConfig, "unknown config key '" + key + "'");
    json& slot = base[it.key()];
    // planner.sigma0 may be a scalar or a per-DoF list.
    const bool sigma = key == "planner.sigma0" && (it->is_number() || it->is_array());
    require(sigma || same_kind(slot, *it), ErrorKind::kConfig,
            "config key '" + key + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
    if (slot.is_object()) {
      merge(slot, *it, key);
    } else {
      slot = *it;
    }
  }
}

inline json* find(json& root, const std::string& dotted) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

inline json parse_scalar_like(const json& schema, const std::string& key, const std::string& text) {
  try {
    if (schema.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw Error(ErrorKind::kConfig, "");
    }
    if (schema.is_number_integer()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw Error(ErrorKind::kConfig, "");
      return v;
    }
    if (schema.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw Error(ErrorKind::kConfig, "");
      return v;
    }
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, "cannot parse '" + text + "' for config key '" + key + "'");
  }
  return text;
}

}  // namespace detail

/// Applies `--a.b value` style overrides. Arrays take comma-separated values.
inline void apply_override(json& cfg, const std::string& dotted, const std::string& text) {
  json* slot = detail::find(cfg, dotted);
  require(slot != nullptr, ErrorKind::kConfig, "unknown config key '" + dotted + "'");
  require(!slot->is_object(), ErrorKind::kConfig, "config key '" + dotted + "' is a section, not a value");
  if (slot->is_array() || (dotted == "planner.sigma0" && text.find(',') != std::string::npos)) {
    const json elem_schema = slot->is_array() && !slot->empty() ? (*slot)[0] : json(0.0);
    json arr = json::array();
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) arr.push_back(detail::parse_scalar_like(elem_schema, dotted, part));
    *slot = arr;
    return;
  }
  *slot = detail::parse_scalar_like(*slot, dotted, text);
}

inline json load_config_file(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "config file not found: " + path.string());
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Defaults <- file <- overrides, then validated.
inline json resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

// ---- typed views ----

inline sim::DatasetConfig dataset_config(const json& c) {
  const json& d = c["data"];
  sim::DatasetConfig out;
  out.episodes = d["episodes"].get<int>();
  out.episode_length = d["episode_length"].get<int>();
  out.seed = c["seed"].get<std::uint64_t>();
  out.noise_fraction = d["noise_fraction"].get<double>();
  out.history = d["history"].get<int>();
  out.gamma = d["gamma"].get<double>();
  out.integrator = sim::integrator_from_string(d["integrator"].get<std::string>());
  out.init = sim::init_mode_from_string(d["init"].get<std::string>());
  return out;
}

inline std::vector<Index> index_list(const json& j) {
  std::vector<Index> out;
  for (const auto& v : j) out.push_back(v.get<Index>());
  return out;
}

inline zoo::ModelConfig model_config(const json& c) {
  const json& m = c["model"];
  zoo::ModelConfig out;
  out.hidden = index_list(m["hidden"]);
  out.eps = m["eps"].get<double>();
  out.half_step = m["half_step"].get<bool>();
  out.use_external = m["use_external"].get<bool>();
  out.onn_residual = m["onn_residual"].get<bool>();
  out.onn_match_params = m["onn_match_params"].get<bool>();
  out.fd_targets = m["fd_targets"].get<bool>();
  return out;
}

inline train::TrainConfig train_config(const json& c) {
  const json& t = c["train"];
  train::TrainConfig out;
  out.lr = t["lr"].get<double>();
  out.batch_size = t["batch_size"].get<Index>();
  out.epochs = t["epochs"].get<int>();
  out.clip_norm = t["clip_norm"].get<double>();
  out.critic_tail = t["critic_tail"].get<double>();
  out.seed = c["seed"].get<std::uint64_t>();
  return out;
}

/// sigma0 is resolved against the system's DoF count.
inline planner::PlannerConfig planner_config(const json& c, Index dof) {
  const json& p = c["planner"];
  planner::PlannerConfig out;
  out.H = p["H"].get<Index>();
  out.N = p["N"].get<Index>();
  out.M = p["M"].get<Index>();
  out.M_pi = p["M_pi"].get<Index>();
  out.M_elite = p["M_elite"].get<Index>();
  out.gamma = p["gamma"].get<double>();
  out.beta = p["beta"].get<double>();
  out.alpha = p["alpha"].get<double>();
  out.lambda = p["lambda"].get<double>();
  if (p["sigma0"].is_array()) {
    require(static_cast<Index>(p["sigma0"].size()) == dof, ErrorKind::kConfig,
            "planner.sigma0 has " + std::to_string(p["sigma0"].size()) + " entries, the system has " +
                std::to_string(dof) + " DoF");
    out.sigma0.resize(dof);
    for (Index i = 0; i < dof; ++i) out.sigma0[i] = p["sigma0"][i].get<double>();
  } else {
    out.sigma0 = Vector::Constant(dof, p["sigma0"].get<double>());
  }
  out.sigma_min = p["sigma_min"].get<double>();
  out.sigma0_action_fraction = p["sigma0_action_fraction"].get<double>();
  out.root_reject_threshold = p["root_reject_threshold"].get<double>();
  out.common_random_numbers = p["common_random_numbers"].get<bool>();
  out.carry_elites = p["carry_elites"].get<bool>();
  out.first_action_step = p["first_action_step"].get<int>();
  out.clip_actuation = p["clip_actuation"].get<bool>();
  out.anchor_warm = p["anchor_warm"].get<bool>();
  return out;
}

inline bench::ClosedLoopConfig closed_loop_config(const json& c, Index dof) {
  const json& r = c["rollout"];
  bench::ClosedLoopConfig out;
  out.episodes = r["episodes"].get<int>();
  out.steps = r["steps"].get<int>();
  out.seed = c["seed"].get<std::uint64_t>();
  out.init = sim::init_mode_from_string(r["init"].get<std::string>());
  out.integrator = sim::integrator_from_string(r["integrator"].get<std::string>());
  out.use_encoder = r["use_encoder"].get<bool>();
  out.warm_start = r["warm_start"].get<bool>();
  out.gamma = c["planner"]["gamma"].get<double>();
  out.planner = planner_config(c, dof);
  return out;
}

inline void validate_config(const json& c) {
  require(c["schema_version"].get<int>() == kSchemaVersion, ErrorKind::kConfig,
          "schema_version " + c["schema_version"].dump() + " is not supported (expected " +
              std::to_string(kSchemaVersion) + ")");
  const auto spec = sim::make_system(c["system"].get<std::string>());
  require(c["workers"].get<int>() >= 1, ErrorKind::kConfig, "workers must be >= 1");
  const auto dc = dataset_config(c);
  require(dc.episodes >= 1, ErrorKind::kConfig, "data.episodes must be >= 1");
  require(dc.episode_length >= 1, ErrorKind::kConfig, "data.episode_length must be >= 1");
  require(dc.history >= 1, ErrorKind::kConfig, "data.history must be >= 1");
  require(dc.noise_fraction >= 0.0, ErrorKind::kConfig, "data.noise_fraction must be >= 0");
  zoo::variant_from_string(c["model"]["variant"].get<std::string>());
  for (const char* sec : {"model", "heads", "encoder"})
    for (const auto& w : c[sec]["hidden"])
      require(w.get<Index>() >= 1, ErrorKind::kConfig, std::string(sec) + ".hidden widths must be >= 1");
  train::validate(train_config(c));
  const auto cl = closed_loop_config(c, spec.n);
  planner::validate(cl.planner);
  require(cl.episodes >= 1, ErrorKind::kConfig, "rollout.episodes must be >= 1");
  require(cl.steps >= 0, ErrorKind::kConfig, "rollout.steps must be >= 0");
  bench::controller_from_string(c["rollout"]["planner"].get<std::string>());
  for (const auto& p : c["bench"]["planners"]) bench::controller_from_string(p.get<std::string>());
  for (const auto& v : c["bench"]["variants"]) zoo::variant_from_string(v.get<std::string>());
  require(!c["bench"]["seeds"].empty(), ErrorKind::kConfig, "bench.seeds must not be empty");
  require(c["bench"]["holdout_episodes"].get<int>() >= 1, ErrorKind::kConfig, "bench.holdout_episodes must be >= 1");
  require(c["bench"]["stride"].get<int>() >= 1, ErrorKind::kConfig, "bench.stride must be >= 1");
  require(c["bench"]["calls"].get<int>() >= 1 && c["bench"]["warmup"].get<int>() >= 0, ErrorKind::kConfig,
          "bench.calls must be >= 1 and bench.warmup >= 0");
}

inline json resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  json cfg = default_config();
  if (file) detail::merge(cfg, load_config_file(*file), "");
  for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

}  // namespace lagmpc::cli
