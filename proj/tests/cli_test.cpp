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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lagmpc/cli/commands.hpp"

namespace lagmpc {
namespace {

namespace fs = std::filesystem;
using cli::json;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no lagmpc::Error thrown";
  return ErrorKind::kShape;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lagmpc_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_binary(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LAGMPC_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Config, DefaultsMatchTheHyperparameterTable) {
  const json c = cli::resolve_config(std::nullopt, {});
  const auto pc = cli::planner_config(c, 1);
  EXPECT_EQ(pc.H, 8);
  EXPECT_EQ(pc.N, 6);
  EXPECT_EQ(pc.M, 500);
  EXPECT_EQ(pc.M_pi, 30);
  EXPECT_EQ(pc.M_elite, 60);
  EXPECT_EQ(pc.gamma, 0.99);
  EXPECT_EQ(pc.beta, 0.95);
  EXPECT_EQ(pc.alpha, 0.5);
  EXPECT_EQ(pc.lambda, 1.0);
}

TEST(Config, FlagsOverrideFileOverridesDefaults) {
  const auto dir = scratch("precedence");
  std::ofstream(dir / "c.json") << R"({"planner": {"H": 8, "N": 3}, "seed": 7})";
  const json c = cli::resolve_config(dir / "c.json", {{"planner.H", "16"}});
  EXPECT_EQ(c["planner"]["H"], 16);
  EXPECT_EQ(c["planner"]["N"], 3);
  EXPECT_EQ(c["planner"]["M"], 500);
  EXPECT_EQ(c["seed"], 7);
  const json d = cli::resolve_config(std::nullopt, {{"system", "cartpole"}, {"model.hidden", "32,16"}, {"planner.sigma0", "0.1,0.2"}});
  EXPECT_EQ(cli::index_list(d["model"]["hidden"]), (std::vector<Index>{32, 16}));
  EXPECT_EQ(cli::planner_config(d, 2).sigma0.size(), 2);
  // sigma0 length is checked against the configured system.
  EXPECT_EQ(kind_of([] { cli::resolve_config(std::nullopt, {{"planner.sigma0", "0.1,0.2"}}); }), ErrorKind::kConfig);
}

TEST(Config, SchemaViolationsNameTheKey) {
  try {
    cli::resolve_config(std::nullopt, {{"planner.M_elite", "600"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("M_elite"), std::string::npos);
  }
  try {
    cli::resolve_config(std::nullopt, {{"planner.bogus", "1"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("planner.bogus"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { cli::resolve_config(std::nullopt, {{"planner.H", "eight"}}); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { cli::resolve_config(std::nullopt, {{"planner.H", "2.5"}}); }), ErrorKind::kConfig);
}

TEST(Config, MissingFileIsDistinctFromBadFile) {
  const auto dir = scratch("files");
  EXPECT_EQ(kind_of([&] { cli::resolve_config(dir / "absent.json", {}); }), ErrorKind::kIo);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(kind_of([&] { cli::resolve_config(dir / "bad.json", {}); }), ErrorKind::kConfig);
  std::ofstream(dir / "typed.json") << R"({"planner": {"H": "x"}})";
  EXPECT_EQ(kind_of([&] { cli::resolve_config(dir / "typed.json", {}); }), ErrorKind::kConfig);
}

TEST(Binary, UnknownSubcommandAndMissingCheckpoint) {
  const auto dir = scratch("binary");
  EXPECT_NE(run_binary("frobnicate", dir / "a.log"), 0);
  EXPECT_NE(slurp(dir / "a.log").find("Usage"), std::string::npos);
  EXPECT_NE(run_binary("", dir / "b.log"), 0);
  const auto missing = dir / "nowhere";
  EXPECT_NE(run_binary("rollout --ckpt " + missing.string(), dir / "c.log"), 0);
  const std::string msg = slurp(dir / "c.log");
  EXPECT_NE(msg.find("error kind=io"), std::string::npos) << msg;
  EXPECT_NE(msg.find(missing.string()), std::string::npos) << msg;
  EXPECT_NE(run_binary("train --planner.M_elite 600", dir / "d.log"), 0);
  EXPECT_NE(slurp(dir / "d.log").find("error kind=config"), std::string::npos);
}

// Small pendulum pipeline, run twice from scratch: every non-timing output
// must be byte-identical.
TEST(Binary, EndToEndIsReproducible) {
  const auto dir = scratch("e2e");
  const std::string small =
      " --model.hidden 16,16 --heads.hidden 16 --encoder.hidden 16 --train.epochs 2"
      " --planner.M 40 --planner.M_pi 4 --planner.M_elite 8 --planner.N 2";
  for (const char* run : {"a", "b"}) {
    const auto r = dir / run;
    const std::string p = " --data " + (r / "data").string() + " --ckpt " + (r / "ckpt").string() +
                          " --out " + (r / "out").string();
    ASSERT_EQ(run_binary("gen-data --episodes 3 --data.episode_length 40" + p + small, r.string() + ".log"), 0);
    ASSERT_EQ(run_binary("train" + p + small, r.string() + ".log"), 0) << slurp(r.string() + ".log");
    ASSERT_EQ(run_binary("rollout --episodes 1 --rollout.steps 8" + p + small, r.string() + ".log"), 0);
  }
  for (const char* f : {"data/records.ndjson", "data/manifest.json", "ckpt/stack.ckpt", "out/episodes.csv",
                        "out/provenance.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  // Echoed configs differ only in the run paths.
  json cfg = json::parse(slurp(dir / "a" / "out" / "config.json"));
  json other = json::parse(slurp(dir / "b" / "out" / "config.json"));
  cfg.erase("paths");
  other.erase("paths");
  EXPECT_EQ(cfg, other);
  EXPECT_EQ(cfg["planner"]["M"], 40);
  EXPECT_EQ(cfg["seed"], 0);
}

}  // namespace
}  // namespace lagmpc
