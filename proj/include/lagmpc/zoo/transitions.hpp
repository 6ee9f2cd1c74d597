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

// Dataset records unpacked into column-major training matrices.

#include <vector>

#include "lagmpc/sim/dataset.hpp"

namespace lagmpc::zoo {

/// Revolute flags of the reduced CoM state's position block.
inline std::vector<bool> com_angular(const sim::SystemSpec& s) {
  if (s.kind == sim::SystemKind::kPendulum) return {true};
  return {false, false, true};
}

/// Wraps the flagged position rows of a [positions; rates] batch.
inline void wrap_rows(Matrix& S, const std::vector<bool>& angular) {
  for (std::size_t i = 0; i < angular.size(); ++i)
    if (angular[i])
      for (Index c = 0; c < S.cols(); ++c) S(i, c) = wrap_angle(S(i, c));
}

// Wrapped difference for flagged position rows, plain difference elsewhere.
inline Matrix state_difference(const Matrix& A, const Matrix& B, const std::vector<bool>& angular) {
  Matrix D = A - B;
  wrap_rows(D, angular);
  return D;
}

/// One column per record. States are canonical: revolute coordinates of z
/// are wrapped and z' is shifted by the same multiple of 2 pi, so every pair
/// is a continuous one-step transition.
struct Transitions {
  Matrix Z, U, Znext;
  Matrix Qdd;     // analytic acceleration at (z, u)
  Matrix QddFd;   // (qdot' - qdot) / dt, the finite-difference alternative
  Matrix C, Cnext;  // reduced CoM states
  Matrix Expert;    // expert action
  Matrix Obs;       // flattened observation histories
  Vector reward, value;
  std::vector<char> history_complete;
  std::vector<int> episode, t;
  double gamma = 0.99;  // discount the value targets were summed with

  Index size() const { return Z.cols(); }
};

inline Transitions make_transitions(const sim::Dataset& ds) {
  const auto& s = ds.spec;
  const Index N = static_cast<Index>(ds.records.size());
  require(N >= 1, ErrorKind::kInvalidArg, "dataset has no records");
  const Index n = s.n, d = sim::com_dof(s);
  const Index hist = ds.records.front().obs_history.size();
  Transitions tr;
  tr.gamma = ds.config.gamma;
  tr.Z.resize(2 * n, N);
  tr.Znext.resize(2 * n, N);
  tr.U.resize(s.m, N);
  tr.Qdd.resize(n, N);
  tr.QddFd.resize(n, N);
  tr.C.resize(2 * d, N);
  tr.Cnext.resize(2 * d, N);
  tr.Expert.resize(s.m, N);
  tr.Obs.resize(hist, N);
  tr.reward.resize(N);
  tr.value.resize(N);
  const auto cang = com_angular(s);
  for (Index i = 0; i < N; ++i) {
    const auto& r = ds.records[i];
    const Vector z = sim::canonical_state(s, r.state);
    const Vector offset = r.state - z;
    const Vector zn = r.next_state - offset;
    tr.Z.col(i) = z;
    tr.Znext.col(i) = zn;
    tr.U.col(i) = r.u;
    tr.Qdd.col(i) = r.qddot;
    tr.QddFd.col(i) = (r.next_state.tail(n) - r.state.tail(n)) / s.dt;
    Vector c = sim::com_reduce(s, lnn::GeneralizedState::from_stacked(z));
    Vector cn = sim::com_reduce(s, lnn::GeneralizedState::from_stacked(zn));
    // Keep the reduced pitch continuous across the step.
    for (Index k = 0; k < d; ++k)
      if (cang[k]) cn[k] = c[k] + wrap_angle(cn[k] - c[k]);
    tr.C.col(i) = c;
    tr.Cnext.col(i) = cn;
    tr.Expert.col(i) = r.expert_action;
    tr.Obs.col(i) = r.obs_history;
    tr.reward[i] = r.reward;
    tr.value[i] = r.value_target;
    tr.history_complete.push_back(r.history_complete);
    tr.episode.push_back(r.episode);
    tr.t.push_back(r.t);
  }
  return tr;
}

inline Matrix take_cols(const Matrix& M, const std::vector<Index>& idx) { return M(Eigen::all, idx); }

}  // namespace lagmpc::zoo
