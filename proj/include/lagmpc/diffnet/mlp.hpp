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
#include <cstdint>
#include <vector>

#include "lagmpc/core.hpp"

namespace lagmpc::diffnet {

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Multi-layer perceptron with tanh hidden activations and an identity
/// output layer.
///
/// A fixed (non-trainable) affine map is applied on both ends:
///   x_net = (x - input_shift) .* input_scale
///   y     = output_scale .* net(x_net) + output_shift
/// Both default to the identity. Normalization statistics live here so
/// every gradient routine accounts for them automatically.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<Index> layer_sizes) : sizes_(std::move(layer_sizes)) {
    require(sizes_.size() >= 2, ErrorKind::kInvalidArg,
            "Mlp needs at least an input and an output size");
    for (Index s : sizes_) {
      require(s > 0, ErrorKind::kInvalidArg, "Mlp layer sizes must be positive");
    }
    layers_.resize(sizes_.size() - 1);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      layers_[l].weight = Matrix::Zero(sizes_[l + 1], sizes_[l]);
      layers_[l].bias = Vector::Zero(sizes_[l + 1]);
    }
    input_shift_ = Vector::Zero(sizes_.front());
    input_scale_ = Vector::Ones(sizes_.front());
    output_shift_ = Vector::Zero(sizes_.back());
    output_scale_ = Vector::Ones(sizes_.back());
  }

  const std::vector<Index>& layer_sizes() const { return sizes_; }
  Index input_dim() const { return sizes_.front(); }
  Index output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return layers_.size(); }

  const Layer& layer(std::size_t l) const { return layers_[l]; }
  Layer& layer(std::size_t l) { return layers_[l]; }

  const Vector& input_shift() const { return input_shift_; }
  const Vector& input_scale() const { return input_scale_; }
  const Vector& output_shift() const { return output_shift_; }
  const Vector& output_scale() const { return output_scale_; }

  void set_input_normalization(Vector shift, Vector scale) {
    require_dim(shift.size(), input_dim(), "input shift");
    require_dim(scale.size(), input_dim(), "input scale");
    input_shift_ = std::move(shift);
    input_scale_ = std::move(scale);
  }
  void set_output_affine(Vector shift, Vector scale) {
    require_dim(shift.size(), output_dim(), "output shift");
    require_dim(scale.size(), output_dim(), "output scale");
    output_shift_ = std::move(shift);
    output_scale_ = std::move(scale);
  }

  Index parameter_count() const {
    Index count = 0;
    for (const auto& layer : layers_) count += layer.weight.size() + layer.bias.size();
    return count;
  }

  // Flattened trainable parameters, layer by layer, weight (row-major) then bias.
  Vector flat_parameters() const {
    Vector out(parameter_count());
    Index k = 0;
    for (const auto& layer : layers_) {
      for (Index i = 0; i < layer.weight.rows(); ++i)
        for (Index j = 0; j < layer.weight.cols(); ++j) out[k++] = layer.weight(i, j);
      for (Index i = 0; i < layer.bias.size(); ++i) out[k++] = layer.bias[i];
    }
    return out;
  }

  void set_flat_parameters(const Eigen::Ref<const Vector>& flat) {
    require_dim(flat.size(), parameter_count(), "flat parameter vector");
    Index k = 0;
    for (auto& layer : layers_) {
      for (Index i = 0; i < layer.weight.rows(); ++i)
        for (Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = flat[k++];
      for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[k++];
    }
  }

  // Columns of X are independent inputs.
  Matrix forward_batch(const Eigen::Ref<const Matrix>& X) const {
    require_dim(X.rows(), input_dim(), "Mlp input");
    Matrix h = input_scale_.asDiagonal() * (X.colwise() - input_shift_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix a = layers_[l].weight * h;
      a.colwise() += layers_[l].bias;
      h = (l + 1 < layers_.size()) ? Matrix(a.array().tanh()) : std::move(a);
    }
    return (output_scale_.asDiagonal() * h).colwise() + output_shift_;
  }

  Vector forward(const Eigen::Ref<const Vector>& x) const {
    require_dim(x.size(), input_dim(), "Mlp input");
    return forward_batch(x);
  }

 private:
  std::vector<Index> sizes_;
  std::vector<Layer> layers_;
  Vector input_shift_, input_scale_;
  Vector output_shift_, output_scale_;
};

/// Gradient of a scalar functional with respect to every trainable
/// parameter of one Mlp, shaped like the network.
struct MlpGradient {
  std::vector<Layer> layers;

  static MlpGradient zeros_like(const Mlp& net) {
    MlpGradient g;
    g.layers.resize(net.num_layers());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      g.layers[l].weight = Matrix::Zero(net.layer(l).weight.rows(), net.layer(l).weight.cols());
      g.layers[l].bias = Vector::Zero(net.layer(l).bias.size());
    }
    return g;
  }

  Vector flat() const {
    Index count = 0;
    for (const auto& layer : layers) count += layer.weight.size() + layer.bias.size();
    Vector out(count);
    Index k = 0;
    for (const auto& layer : layers) {
      for (Index i = 0; i < layer.weight.rows(); ++i)
        for (Index j = 0; j < layer.weight.cols(); ++j) out[k++] = layer.weight(i, j);
      for (Index i = 0; i < layer.bias.size(); ++i) out[k++] = layer.bias[i];
    }
    return out;
  }
};

/// Primal values recorded during one forward evaluation. Adjoints are
/// zero-initialized by each backward call; a tape serves one backward pass.
class MlpTape {
 public:
  // Evaluates the network on x (columns are samples) and records every
  // post-activation value, including the normalized input.
  Matrix record(const Mlp& net, const Eigen::Ref<const Matrix>& X) {
    require_dim(X.rows(), net.input_dim(), "Mlp input");
    net_ = &net;
    values_.clear();
    values_.push_back(net.input_scale().asDiagonal() * (X.colwise() - net.input_shift()));
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      Matrix a = net.layer(l).weight * values_.back();
      a.colwise() += net.layer(l).bias;
      if (l + 1 < net.num_layers()) a = a.array().tanh().matrix();
      values_.push_back(std::move(a));
    }
    consumed_ = false;
    return (net.output_scale().asDiagonal() * values_.back()).colwise() + net.output_shift();
  }

  // Propagates output adjoints (same shape as the recorded output) back to
  // the parameters (accumulated into grad when non-null) and returns the
  // input adjoint.
  Matrix backward(const Eigen::Ref<const Matrix>& upstream, MlpGradient* grad) {
    require(net_ != nullptr && !consumed_, ErrorKind::kInvalidArg,
            "MlpTape::backward requires a fresh record()");
    consumed_ = true;
    const Mlp& net = *net_;
    require_dim(upstream.rows(), net.output_dim(), "upstream adjoint");
    require_dim(upstream.cols(), values_.back().cols(), "upstream adjoint batch");
    Matrix adj = net.output_scale().asDiagonal() * upstream;
    for (std::size_t l = net.num_layers(); l-- > 0;) {
      if (l + 1 < net.num_layers()) {
        adj.array() *= 1.0 - values_[l + 1].array().square();
      }
      if (grad != nullptr) {
        grad->layers[l].weight.noalias() += adj * values_[l].transpose();
        grad->layers[l].bias += adj.rowwise().sum();
      }
      adj = net.layer(l).weight.transpose() * adj;
    }
    return net.input_scale().asDiagonal() * adj;
  }

 private:
  const Mlp* net_ = nullptr;
  std::vector<Matrix> values_;
  bool consumed_ = true;
};

/// Exact Jacobian dy/dx at x by one reverse pass with an identity seed.
inline Matrix grad_input(const Mlp& net, const Eigen::Ref<const Vector>& x) {
  require_dim(x.size(), net.input_dim(), "Mlp input");
  const Index out = net.output_dim();
  MlpTape tape;
  // Replicate x once per output so a single backward pass carries the
  // full identity seed.
  tape.record(net, x.replicate(1, out));
  Matrix input_adj = tape.backward(Matrix::Identity(out, out), nullptr);
  return input_adj.transpose();
}

/// Exact gradient of upstream' * forward(x) with respect to the parameters.
inline MlpGradient grad_params(const Mlp& net, const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& upstream) {
  require_dim(x.size(), net.input_dim(), "Mlp input");
  require_dim(upstream.size(), net.output_dim(), "upstream");
  MlpTape tape;
  tape.record(net, x);
  MlpGradient grad = MlpGradient::zeros_like(net);
  tape.backward(upstream, &grad);
  return grad;
}

/// Deterministic initialization: weights and biases uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Mlp init_mlp(const std::vector<Index>& layer_sizes, std::uint64_t seed) {
  Mlp net(layer_sizes);
  Rng rng = make_rng(seed, 0x4d4c50);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Layer& layer = net.layer(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Index i = 0; i < layer.weight.rows(); ++i)
      for (Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = uniform(rng, -bound, bound);
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = uniform(rng, -bound, bound);
  }
  return net;
}

// Convenience: sizes = {in, hidden..., out}.
inline std::vector<Index> mlp_sizes(Index in, const std::vector<Index>& hidden, Index out) {
  std::vector<Index> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace lagmpc::diffnet
