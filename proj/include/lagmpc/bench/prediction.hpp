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

// Open-loop H-step prediction error against recorded episodes.

#include <functional>

#include "lagmpc/bench/report.hpp"
#include "lagmpc/sim/dataset.hpp"
#include "lagmpc/train/optim.hpp"
#include "lagmpc/zoo/models.hpp"

namespace lagmpc::bench {

/// Anything that steps a batch of states. reduce maps canonical full states
/// into the predictor's own state space (identity unless reduced).
struct Predictor {
  std::string name;
  std::uint64_t seed = 0;
  bool reduced = false;
  std::vector<bool> angular;
  std::function<Matrix(const Matrix&)> reduce;
  std::function<Matrix(const Matrix&, const Matrix&)> step;
};

inline Predictor predictor_for(const zoo::DynamicsModelHandle& h, std::uint64_t seed) {
  Predictor p;
  p.name = zoo::to_string(h.variant);
  p.seed = seed;
  p.reduced = h.uses_com();
  p.angular = h.angular();
  p.reduce = [&h](const Matrix& Z) -> Matrix {
    if (!h.uses_com()) return Z;
    Matrix C(h.state_dim(), Z.cols());
    for (Index c = 0; c < Z.cols(); ++c) C.col(c) = h.reduce(Z.col(c));
    return C;
  };
  p.step = [&h](const Matrix& S, const Matrix& U) { return h.step_batch(S, U); };
  return p;
}

/// The analytic terms pushed through the same discrete update as the
/// learned models.
inline Predictor analytic_predictor(const sim::AnalyticModel& model, const std::string& name = "analytic") {
  Predictor p;
  p.name = name;
  p.angular = model.spec().angular;
  p.reduce = [](const Matrix& Z) { return Z; };
  p.step = [&model](const Matrix& S, const Matrix& U) -> Matrix {
    const Index n = model.dof();
    auto [q, qd] = lnn::step_batch(model, S.topRows(n), S.bottomRows(n), U);
    Matrix out(2 * n, S.cols());
    out << q, qd;
    zoo::wrap_rows(out, model.spec().angular);
    return out;
  };
  return p;
}

struct PredictionConfig {
  std::vector<Index> horizons{1, 2, 4, 8, 16};
  Index stride = 10;  // spacing of segment starts within an episode
};

/// Per predictor and horizon, the mean over segments of
///   (1/d) sum_i ((pred_i - truth_i) / std_i)^2
/// after H open-loop steps under the recorded inputs. std_i is the spread
/// of the evaluation states in the predictor's own state space, so every
/// full-state predictor is judged on the same scale. Reduced-space models
/// report metric "mse_reduced", which is not comparable with "mse".
inline BenchReport bench_prediction(const std::vector<Predictor>& predictors, const sim::Dataset& ds,
                                    const PredictionConfig& cfg) {
  require(cfg.stride >= 1, ErrorKind::kConfig, "prediction.stride must be >= 1");
  require(!ds.records.empty(), ErrorKind::kInvalidArg, "bench_prediction needs a non-empty dataset");
  const auto& spec = ds.spec;
  const Index dz = 2 * spec.n;
  BenchReport report;
  const auto ranges = ds.episode_ranges();

  Matrix all(dz, static_cast<Index>(ds.records.size()));
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    all.col(static_cast<Index>(i)) = sim::canonical_state(spec, ds.records[i].state);

  for (const Predictor& p : predictors) {
    const Vector scale = train::Normalizer::fit(p.reduce(all)).stddev;
    for (Index H : cfg.horizons) {
      require(H >= 0, ErrorKind::kConfig, "prediction horizons must be >= 0");
      std::vector<std::size_t> starts;
      long skipped = 0;
      for (const auto& [a, b] : ranges)
        for (std::size_t t = a; t < b; t += static_cast<std::size_t>(cfg.stride)) {
          if (t + static_cast<std::size_t>(H) <= b) {
            starts.push_back(t);
          } else {
            ++skipped;
          }
        }
      report.skipped += skipped;
      if (skipped > 0)
        report.notes.push_back(p.name + " H=" + std::to_string(H) + ": " + std::to_string(skipped) +
                               " segments past the episode end skipped");
      if (starts.empty()) continue;
      const Index B = static_cast<Index>(starts.size());
      Matrix Z0(dz, B), Truth(dz, B);
      for (Index j = 0; j < B; ++j) {
        const auto& r0 = ds.records[starts[j]];
        const Vector z0 = sim::canonical_state(spec, r0.state);
        const Vector offset = r0.state - z0;
        Z0.col(j) = z0;
        Truth.col(j) = H == 0 ? z0 : Vector(ds.records[starts[j] + H - 1].next_state - offset);
      }
      Matrix S = p.reduce(Z0);
      for (Index k = 0; k < H; ++k) {
        Matrix U(spec.m, B);
        for (Index j = 0; j < B; ++j) U.col(j) = ds.records[starts[j] + k].u;
        S = p.step(S, U);
      }
      const Matrix err = zoo::state_difference(S, p.reduce(Truth), p.angular);
      const Matrix scaled = scale.cwiseInverse().asDiagonal() * err;
      double mse = scaled.colwise().squaredNorm().sum() / static_cast<double>(B * scaled.rows());
      if (!std::isfinite(mse)) mse = std::numeric_limits<double>::infinity();
      report.add({"prediction", p.name, H, p.seed, p.reduced ? "mse_reduced" : "mse", mse});
    }
  }
  return report;
}

}  // namespace lagmpc::bench
