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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace lagmpc {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// Error categories. Every failure surfaced to the CLI is one of these so the
// entry point can emit a single machine-parsable line.
enum class ErrorKind {
  kShape,        // dimension mismatch
  kInvalidArg,   // precondition violated
  kConfig,       // schema violation in a config file or flag
  kIo,           // missing file, unreadable checkpoint or dataset
  kUnsupported,  // variant or system does not support the request
  kDiverged,     // non-finite loss during training
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kInvalidArg: return "invalid_argument";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kDiverged: return "diverged";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorKind::kShape, std::string(what) + ": expected dimension " +
                                       std::to_string(want) + ", got " +
                                       std::to_string(got));
  }
}

// Wraps an angle to (-pi, pi]. Idempotent.
inline double wrap_angle(double x) {
  constexpr double kPi = std::numbers::pi;
  double y = std::remainder(x, 2.0 * kPi);  // in [-pi, pi]
  if (y <= -kPi) y += 2.0 * kPi;
  return y;
}

// SplitMix64 finalizer, used to derive independent stream seeds from
// (seed, stream index) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// All randomness in the library flows through this generator. Runs are
// reproducible for a given (seed, stream) on a given standard library.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(stream_seed(seed, stream));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

}  // namespace lagmpc
