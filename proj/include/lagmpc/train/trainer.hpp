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

// Minibatch Adam over any flat-parameter objective.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lagmpc/train/optim.hpp"
#include "lagmpc/zoo/models.hpp"

namespace lagmpc::train {

struct TrainConfig {
  double lr = 3e-4;
  Index batch_size = 256;
  int epochs = 20;
  double clip_norm = 1.0;
  double critic_tail = 0.05;  // max discounted weight of the return cut off by the episode end
  std::uint64_t seed = 0;
  AdamConfig adam() const { return {lr, 0.9, 0.999, 1e-8}; }
};

inline void validate(const TrainConfig& c) {
  require(c.lr >= 0.0, ErrorKind::kConfig, "train.lr must be non-negative");
  require(c.batch_size >= 1, ErrorKind::kConfig, "train.batch_size must be >= 1");
  require(c.epochs >= 0, ErrorKind::kConfig, "train.epochs must be >= 0");
  require(c.clip_norm >= 0.0, ErrorKind::kConfig, "train.clip_norm must be >= 0");
  require(c.critic_tail > 0.0 && c.critic_tail <= 1.0, ErrorKind::kConfig, "train.critic_tail must be in (0, 1]");
}

struct LossRow {
  int epoch = 0;
  std::string term;
  double value = 0.0;
  double wall_ms = 0.0;
};

/// Per-term loss per epoch. Epoch 0 is the loss before any update; later
/// epochs hold the sample-weighted mean of that epoch's minibatch losses.
struct LossReport {
  std::vector<LossRow> rows;
  double iteration_ms = 0.0;  // mean wall-clock per minibatch step
  long iterations = 0;
  long skipped_records = 0;

  std::vector<double> curve(const std::string& term) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.term == term) out.push_back(r.value);
    return out;
  }

  void append(const LossReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    const long total = iterations + other.iterations;
    if (total > 0) iteration_ms = (iteration_ms * iterations + other.iteration_ms * other.iterations) / total;
    iterations = total;
    skipped_records += other.skipped_records;
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    out << "epoch,term,value,wall_ms\n";
    out.precision(17);
    for (const auto& r : rows) out << r.epoch << "," << r.term << "," << r.value << "," << r.wall_ms << "\n";
  }
};

/// A differentiable objective over a fixed sample set.
struct Objective {
  std::string term;
  std::vector<Index> samples;  // admissible sample indices
  std::function<Vector()> get_params;
  std::function<void(const Vector&)> set_params;
  std::function<zoo::LossGrad(const std::vector<Index>&)> loss_grad;
  std::function<double(const std::vector<Index>&)> loss;
};

/// Loss over all samples, evaluated in chunks and weighted by chunk size.
inline double full_loss(const Objective& obj, Index chunk) {
  double total = 0.0;
  const Index N = static_cast<Index>(obj.samples.size());
  for (Index start = 0; start < N; start += chunk) {
    const Index len = std::min(chunk, N - start);
    std::vector<Index> idx(obj.samples.begin() + start, obj.samples.begin() + start + len);
    total += obj.loss(idx) * static_cast<double>(len);
  }
  return total / static_cast<double>(N);
}

/// Runs minibatch Adam with global-norm clipping. Deterministic given the
/// seed. Throws kDiverged as soon as a loss or gradient is non-finite.
inline LossReport fit(Objective& obj, const TrainConfig& cfg) {
  validate(cfg);
  require(!obj.samples.empty(), ErrorKind::kInvalidArg, "cannot train '" + obj.term + "' on zero samples");
  using Clock = std::chrono::steady_clock;
  LossReport report;
  const Index N = static_cast<Index>(obj.samples.size());
  const Index bs = std::min(cfg.batch_size, N);
  const auto t0 = Clock::now();
  auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };
  const double initial = full_loss(obj, std::max<Index>(bs, 1024));
  require(std::isfinite(initial), ErrorKind::kDiverged, "initial " + obj.term + " loss is not finite");
  report.rows.push_back({0, obj.term, initial, elapsed_ms()});

  Vector params = obj.get_params();
  Adam adam(params.size(), cfg.adam());
  Rng rng = make_rng(cfg.seed, 0x7472);
  std::vector<Index> order = obj.samples;
  double step_ms = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (Index start = 0; start < N; start += bs) {
      const Index len = std::min(bs, N - start);
      std::vector<Index> idx(order.begin() + start, order.begin() + start + len);
      const auto s0 = Clock::now();
      zoo::LossGrad lg = obj.loss_grad(idx);
      require(std::isfinite(lg.loss) && all_finite(lg.grad), ErrorKind::kDiverged,
              obj.term + " loss diverged at epoch " + std::to_string(epoch));
      clip_grad_norm(lg.grad, cfg.clip_norm);
      adam.step(params, lg.grad);
      obj.set_params(params);
      step_ms += std::chrono::duration<double, std::milli>(Clock::now() - s0).count();
      ++report.iterations;
      weighted += lg.loss * static_cast<double>(len);
    }
    report.rows.push_back({epoch, obj.term, weighted / static_cast<double>(N), elapsed_ms()});
  }
  report.iteration_ms = report.iterations ? step_ms / static_cast<double>(report.iterations) : 0.0;
  return report;
}

inline std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

/// Trains a dynamics model on its variant's loss. Normalization is fitted
/// from the training transitions first.
inline LossReport train_dynamics(zoo::DynamicsModelHandle& model, const zoo::Transitions& tr, const TrainConfig& cfg) {
  model.fit_normalization(tr);
  Objective obj;
  obj.term = "dynamics";
  obj.samples = all_indices(tr.size());
  obj.get_params = [&] { return model.flat_parameters(); };
  obj.set_params = [&](const Vector& p) { model.set_flat_parameters(p); };
  obj.loss_grad = [&](const std::vector<Index>& idx) {
    return zoo::dynamics_loss_grad(model, zoo::make_batch(model, tr, idx));
  };
  obj.loss = [&](const std::vector<Index>& idx) { return zoo::dynamics_loss(model, zoo::make_batch(model, tr, idx)); };
  return fit(obj, cfg);
}

}  // namespace lagmpc::train
