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

// A trained stack: dynamics model, Dreamer heads and (optionally) the
// state encoder, stored together in one checkpoint file.

#include <filesystem>
#include <optional>

#include "lagmpc/dreamer/heads.hpp"
#include "lagmpc/zoo/models.hpp"

namespace lagmpc::bench {

inline const char* kStackFile = "stack.ckpt";

struct Stack {
  sim::SystemSpec spec;
  zoo::DynamicsModelHandle dynamics;
  dreamer::DreamerHeads heads;
  std::optional<dreamer::Encoder> encoder;

  diffnet::Checkpoint to_checkpoint() const {
    diffnet::Checkpoint ck;
    ck.set_meta("stack.system", spec.name);
    dynamics.save_to(ck);
    heads.save_to(ck);
    if (encoder) encoder->save_to(ck);
    return ck;
  }

  static Stack from_checkpoint(const diffnet::Checkpoint& ck) {
    Stack s;
    s.spec = sim::make_system(ck.meta("stack.system"));
    s.dynamics = zoo::DynamicsModelHandle::load_from(ck, s.spec);
    s.heads = dreamer::DreamerHeads::load_from(ck, s.spec);
    if (ck.has_meta("encoder.history")) s.encoder = dreamer::Encoder::load_from(ck, s.spec);
    return s;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    to_checkpoint().save(dir / kStackFile);
  }

  /// Accepts the checkpoint directory or the file itself.
  static Stack load(const std::filesystem::path& path) {
    const auto file = std::filesystem::is_directory(path) ? path / kStackFile : path;
    require(std::filesystem::exists(file), ErrorKind::kIo, "checkpoint not found: " + file.string());
    return from_checkpoint(diffnet::Checkpoint::load(file));
  }
};

}  // namespace lagmpc::bench
