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

#include <cmath>
#include <string>

#include "lagmpc/core.hpp"
#include "lagmpc/diffnet/checkpoint.hpp"

namespace lagmpc::train {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over one flat parameter vector.
class Adam {
 public:
  Adam(Index size, AdamConfig cfg) : cfg_(cfg), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

  void step(Vector& params, const Vector& grad) {
    require_dim(grad.size(), params.size(), "Adam gradient");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    params.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Vector m_, v_;
  long t_ = 0;
};

// Rescales grad in place so its Euclidean norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_grad_norm(Vector& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

/// Per-dimension z-scoring. Dimensions with (near) zero spread keep unit
/// scale so constant inputs stay finite.
struct Normalizer {
  Vector mean;
  Vector stddev;

  static Normalizer identity(Index dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

  // Columns are samples.
  static Normalizer fit(const Matrix& X) {
    require(X.cols() >= 1, ErrorKind::kInvalidArg, "Normalizer::fit needs at least one sample");
    Normalizer n;
    n.mean = X.rowwise().mean();
    n.stddev = ((X.colwise() - n.mean).array().square().rowwise().sum() / static_cast<double>(X.cols()))
                   .sqrt()
                   .matrix();
    for (Index i = 0; i < n.stddev.size(); ++i)
      if (!(n.stddev[i] > 1e-8)) n.stddev[i] = 1.0;
    return n;
  }

  Index dim() const { return mean.size(); }
  Vector inv_std() const { return stddev.cwiseInverse(); }
  Matrix normalize(const Matrix& X) const { return inv_std().asDiagonal() * (X.colwise() - mean); }
  Matrix denormalize(const Matrix& X) const { return (stddev.asDiagonal() * X).colwise() + mean; }

  void save_to(diffnet::Checkpoint& ck, const std::string& prefix) const {
    ck.set_tensor(prefix + "/mean", mean);
    ck.set_tensor(prefix + "/std", stddev);
  }
  static Normalizer load_from(const diffnet::Checkpoint& ck, const std::string& prefix) {
    return {ck.tensor(prefix + "/mean").col(0), ck.tensor(prefix + "/std").col(0)};
  }
};

}  // namespace lagmpc::train
