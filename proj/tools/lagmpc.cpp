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

#include <CLI11.hpp>
#include <algorithm>
#include <iostream>
#include <map>

#include "lagmpc/cli/commands.hpp"

namespace {

using lagmpc::Error;
using lagmpc::ErrorKind;
using Overrides = std::vector<std::pair<std::string, std::string>>;

struct SubArgs {
  std::string config;
  std::map<std::string, std::string> shortcuts;  // flag -> value, applied as dotted overrides
};

// Flag shortcut -> config key. --episodes targets a different key per subcommand.
std::vector<std::pair<std::string, std::string>> shortcut_keys(const std::string& sub) {
  std::vector<std::pair<std::string, std::string>> keys{
      {"system", "system"}, {"seed", "seed"},       {"data", "paths.data"},   {"ckpt", "paths.ckpt"},
      {"out", "paths.out"}, {"variant", "model.variant"}, {"planner", "rollout.planner"},
      {"workers", "workers"}};
  keys.emplace_back("episodes", sub == "gen-data" ? "data.episodes" : "rollout.episodes");
  return keys;
}

// Leftover tokens are `--a.b value` or `--a.b=value` pairs.
Overrides dotted_overrides(const std::vector<std::string>& extra) {
  Overrides out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const std::string& tok = extra[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3)
      throw Error(ErrorKind::kConfig, "unexpected argument '" + tok + "'");
    const std::string body = tok.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extra.size()) throw Error(ErrorKind::kConfig, "missing value for --" + body);
      out.emplace_back(body, extra[++i]);
    }
  }
  return out;
}

std::string quoted(std::string s) {
  for (auto& ch : s)
    if (ch == '"' || ch == '\n') ch = '\'';
  return "\"" + s + "\"";
}

int fail(const std::string& kind, const std::string& msg) {
  std::cerr << "error kind=" << kind << " msg=" << quoted(msg) << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian world models with inverse-dynamics planning", "lagmpc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LAGMPC_VERSION);
  std::map<std::string, SubArgs> args;
  const std::map<std::string, std::string> blurb{
      {"gen-data", "simulate expert episodes into a dataset directory"},
      {"train", "fit dynamics model, reward/critic/policy heads and encoder"},
      {"rollout", "run one controller in closed loop against the simulator"},
      {"bench-prediction", "open-loop prediction error per variant, seed and horizon"},
      {"bench-latency", "plan-call wall clock, inverse vs forward planner"},
      {"bench-return", "closed-loop episode returns per controller"}};
  for (const auto& name : lagmpc::cli::kSubcommands) {
    auto* sub = app.add_subcommand(name, blurb.at(name));
    sub->allow_extras();
    SubArgs& a = args[name];
    sub->add_option("--config", a.config, "JSON config file");
    for (const auto& [flag, key] : shortcut_keys(name))
      sub->add_option("--" + flag, a.shortcuts[flag], "shortcut for " + key);
  }
  if (argc > 1 && argv[1][0] != '-' &&
      std::find(lagmpc::cli::kSubcommands.begin(), lagmpc::cli::kSubcommands.end(), argv[1]) ==
          lagmpc::cli::kSubcommands.end()) {
    std::cerr << app.help();
    return fail("usage", std::string("unknown subcommand '") + argv[1] + "'");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    return fail("usage", e.what());
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    const SubArgs& a = args[name];
    Overrides ov;
    for (const auto& [flag, key] : shortcut_keys(name)) {
      const auto* opt = sub->get_option("--" + flag);
      if (opt->count() > 0) ov.emplace_back(key, a.shortcuts.at(flag));
    }
    for (auto& kv : dotted_overrides(sub->remaining())) ov.push_back(std::move(kv));
    std::optional<std::filesystem::path> file;
    if (!a.config.empty()) file = a.config;
    const auto cfg = lagmpc::cli::resolve_config(file, ov);
    std::cout << lagmpc::cli::dispatch(name, cfg) << "\n";
  } catch (const Error& e) {
    return fail(lagmpc::to_string(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
