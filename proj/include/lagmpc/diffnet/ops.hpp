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

// Two interchangeable evaluation backends for model code written once as a
// template over `Ops`:
//
//   EigenOps  - plain batched evaluation (inference, planning).
//   GraphOps  - records on a Graph so parameter gradients can be pulled
//               back through everything, including input-tangent terms.
//
// Both expose the same member functions with value-typed `Var`s.

#include <vector>

#include "lagmpc/diffnet/graph.hpp"
#include "lagmpc/diffnet/mlp.hpp"

namespace lagmpc::diffnet {

struct EigenOps {
  using Var = Matrix;

  Var constant(Matrix v) const { return v; }
  const Matrix& value(const Var& v) const { return v; }
  Index rows(const Var& v) const { return v.rows(); }
  Index cols(const Var& v) const { return v.cols(); }

  Var matmul(const Var& A, const Var& X) const { return A * X; }
  Var matmul_const(const Matrix& A, const Var& X) const { return A * X; }
  Var add(const Var& a, const Var& b) const { return a + b; }
  Var sub(const Var& a, const Var& b) const { return a - b; }
  Var cwise_mul(const Var& a, const Var& b) const { return a.cwiseProduct(b); }
  Var scale(const Var& a, double s) const { return a * s; }
  Var add_colwise(const Var& X, const Var& b) const {
    Matrix v = X;
    v.colwise() += b.col(0);
    return v;
  }
  Var add_col_const(const Var& X, const Vector& c) const {
    Matrix v = X;
    v.colwise() += c;
    return v;
  }
  Var scale_rows_const(const Var& X, const Vector& s) const { return s.asDiagonal() * X; }
  Var mul_rowwise(const Var& X, const Var& r) const {
    return (X.array().rowwise() * r.row(0).array()).matrix();
  }
  Var tanh(const Var& a) const { return a.array().tanh().matrix(); }
  Var one_minus_square(const Var& h) const { return (1.0 - h.array().square()).matrix(); }
  Var softplus(const Var& a, double offset) const {
    return a.unaryExpr([offset](double x) { return Graph::softplus_scalar(x + offset); });
  }
  Var sigmoid(const Var& a, double offset) const {
    return a.unaryExpr([offset](double x) { return Graph::sigmoid_scalar(x + offset); });
  }
  Var square(const Var& a) const { return a.array().square().matrix(); }
  Var slice_rows(const Var& X, Index start, Index count) const { return X.middleRows(start, count); }
  Var vstack(const std::vector<Var>& parts) const {
    Index total = 0;
    for (const auto& p : parts) total += p.rows();
    Matrix v(total, parts.front().cols());
    Index r = 0;
    for (const auto& p : parts) {
      v.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return v;
  }
  Var sum_rows(const Var& X) const { return X.colwise().sum(); }
  Var sum_all(const Var& X) const {
    Matrix v(1, 1);
    v(0, 0) = X.sum();
    return v;
  }

  Var sym_lower_product(const Var& A, const Var& B, Index n) const {
    Matrix v(n * n, A.cols());
    for (Index c = 0; c < A.cols(); ++c) {
      const Matrix La = unpack_lower(A.col(c), n);
      const Matrix Lb = unpack_lower(B.col(c), n);
      Matrix P = La * Lb.transpose() + Lb * La.transpose();
      v.col(c) = Eigen::Map<const Vector>(P.data(), n * n);
    }
    return v;
  }
  Var batched_matvec(const Var& M, const Var& v, Index n) const {
    Matrix y(n, v.cols());
    for (Index c = 0; c < v.cols(); ++c) {
      y.col(c) = Eigen::Map<const Matrix>(M.col(c).data(), n, n) * v.col(c);
    }
    return y;
  }
  Var batched_spd_solve(const Var& M, const Var& b, Index n) const {
    Matrix x(n, b.cols());
    for (Index c = 0; c < b.cols(); ++c) {
      Eigen::LLT<Matrix> llt(Eigen::Map<const Matrix>(M.col(c).data(), n, n));
      require(llt.info() == Eigen::Success, ErrorKind::kInvalidArg,
              "mass matrix factorization failed");
      x.col(c) = llt.solve(b.col(c));
    }
    return x;
  }
};

// Thin adaptor so Graph satisfies the same calling convention.
struct GraphOps {
  using Var = Graph::Var;
  Graph* graph;

  Var constant(Matrix v) const { return graph->constant(std::move(v)); }
  const Matrix& value(Var v) const { return graph->value(v); }
  Index rows(Var v) const { return graph->rows(v); }
  Index cols(Var v) const { return graph->cols(v); }

  Var matmul(Var A, Var X) const { return graph->matmul(A, X); }
  Var matmul_const(const Matrix& A, Var X) const { return graph->matmul_const(A, X); }
  Var add(Var a, Var b) const { return graph->add(a, b); }
  Var sub(Var a, Var b) const { return graph->sub(a, b); }
  Var cwise_mul(Var a, Var b) const { return graph->cwise_mul(a, b); }
  Var scale(Var a, double s) const { return graph->scale(a, s); }
  Var add_colwise(Var X, Var b) const { return graph->add_colwise(X, b); }
  Var add_col_const(Var X, const Vector& c) const { return graph->add_col_const(X, c); }
  Var scale_rows_const(Var X, const Vector& s) const { return graph->scale_rows_const(X, s); }
  Var mul_rowwise(Var X, Var r) const { return graph->mul_rowwise(X, r); }
  Var tanh(Var a) const { return graph->tanh(a); }
  Var one_minus_square(Var h) const { return graph->one_minus_square(h); }
  Var softplus(Var a, double offset) const { return graph->softplus(a, offset); }
  Var sigmoid(Var a, double offset) const { return graph->sigmoid(a, offset); }
  Var square(Var a) const { return graph->square(a); }
  Var slice_rows(Var X, Index start, Index count) const { return graph->slice_rows(X, start, count); }
  Var vstack(const std::vector<Var>& parts) const { return graph->vstack(parts); }
  Var sum_rows(Var X) const { return graph->sum_rows(X); }
  Var sum_all(Var X) const { return graph->sum_all(X); }
  Var sym_lower_product(Var A, Var B, Index n) const { return graph->sym_lower_product(A, B, n); }
  Var batched_matvec(Var M, Var v, Index n) const { return graph->batched_matvec(M, v, n); }
  Var batched_spd_solve(Var M, Var b, Index n) const { return graph->batched_spd_solve(M, b, n); }
};

/// Parameters of one Mlp bound into a backend. For GraphOps these are leaf
/// parameter nodes whose adjoints can be read back with gradient_of().
template <class Ops>
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<typename Ops::Var> weights;
  std::vector<typename Ops::Var> biases;
};

inline BoundMlp<EigenOps> bind(const EigenOps&, const Mlp& net) {
  BoundMlp<EigenOps> b;
  b.net = &net;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    b.weights.push_back(net.layer(l).weight);
    b.biases.push_back(net.layer(l).bias);
  }
  return b;
}

inline BoundMlp<GraphOps> bind(const GraphOps& ops, const Mlp& net, bool trainable = true) {
  BoundMlp<GraphOps> b;
  b.net = &net;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (trainable) {
      b.weights.push_back(ops.graph->parameter(net.layer(l).weight));
      b.biases.push_back(ops.graph->parameter(net.layer(l).bias));
    } else {
      b.weights.push_back(ops.graph->constant(net.layer(l).weight));
      b.biases.push_back(ops.graph->constant(net.layer(l).bias));
    }
  }
  return b;
}

// Pulls parameter adjoints of a bound network out of a graph after backward.
inline MlpGradient gradient_of(const Graph& graph, const BoundMlp<GraphOps>& bound) {
  MlpGradient g = MlpGradient::zeros_like(*bound.net);
  for (std::size_t l = 0; l < bound.weights.size(); ++l) {
    g.layers[l].weight = graph.grad(bound.weights[l]);
    g.layers[l].bias = graph.grad(bound.biases[l]).col(0);
  }
  return g;
}

template <class Ops>
struct MlpOutput {
  typename Ops::Var value;
  // One output tangent per input tangent, in the same order.
  std::vector<typename Ops::Var> tangents;
};

/// Evaluates a bound Mlp on X (columns are samples) and pushes forward the
/// given input tangents (each the same shape as X). Tangent propagation is
/// recorded in the backend like any other op, so under GraphOps parameter
/// gradients of Jacobian-dependent quantities come out exact.
template <class Ops>
MlpOutput<Ops> apply_mlp(const Ops& ops, const BoundMlp<Ops>& bound, const typename Ops::Var& X,
                         const std::vector<typename Ops::Var>& input_tangents = {}) {
  using Var = typename Ops::Var;
  const Mlp& net = *bound.net;
  require_dim(ops.rows(X), net.input_dim(), "Mlp input");
  Var h = ops.scale_rows_const(ops.add_col_const(X, -net.input_shift()), net.input_scale());
  std::vector<Var> dh;
  dh.reserve(input_tangents.size());
  for (const auto& t : input_tangents) dh.push_back(ops.scale_rows_const(t, net.input_scale()));

  const std::size_t layers = net.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    Var a = ops.add_colwise(ops.matmul(bound.weights[l], h), bound.biases[l]);
    for (auto& d : dh) d = ops.matmul(bound.weights[l], d);
    if (l + 1 < layers) {
      h = ops.tanh(a);
      if (!dh.empty()) {
        Var slope = ops.one_minus_square(h);
        for (auto& d : dh) d = ops.cwise_mul(slope, d);
      }
    } else {
      h = a;
    }
  }
  MlpOutput<Ops> out;
  out.value = ops.add_col_const(ops.scale_rows_const(h, net.output_scale()), net.output_shift());
  for (auto& d : dh) out.tangents.push_back(ops.scale_rows_const(d, net.output_scale()));
  return out;
}

// Constant tangent direction e_k for a batch: row k is all ones.
inline Matrix unit_direction(Index dim, Index k, Index batch) {
  Matrix t = Matrix::Zero(dim, batch);
  t.row(k).setOnes();
  return t;
}

}  // namespace lagmpc::diffnet
