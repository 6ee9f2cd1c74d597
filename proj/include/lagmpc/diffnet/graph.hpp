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

#include <functional>
#include <vector>

#include "lagmpc/core.hpp"

namespace lagmpc::diffnet {

// Index helpers for per-column small matrices. A batch of n x n matrices is
// stored as an (n*n) x B matrix, one column-major flattened matrix per column.
// A packed lower-triangular factor is stored as [diag (n); strictly lower
// entries in row-major order] so diagonal-only factors are a prefix.
inline Index packed_lower_size(Index n, bool diagonal_only) {
  return diagonal_only ? n : n * (n + 1) / 2;
}

inline Matrix unpack_lower(const Eigen::Ref<const Vector>& packed, Index n) {
  Matrix L = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) L(i, i) = packed[i];
  if (packed.size() > n) {
    Index k = n;
    for (Index i = 1; i < n; ++i)
      for (Index j = 0; j < i; ++j) L(i, j) = packed[k++];
  }
  return L;
}

inline Vector pack_lower(const Matrix& L, Index packed_size) {
  const Index n = L.rows();
  Vector packed(packed_size);
  for (Index i = 0; i < n; ++i) packed[i] = L(i, i);
  if (packed_size > n) {
    Index k = n;
    for (Index i = 1; i < n; ++i)
      for (Index j = 0; j < i; ++j) packed[k++] = L(i, j);
  }
  return packed;
}

/// Reverse-mode tape over batched dense matrices (columns are samples).
///
/// Every op appends one node holding its primal value; backward() walks the
/// nodes in reverse creation order, which is a valid topological order.
class Graph {
 public:
  struct Var {
    int id = -1;
  };

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var parameter(Matrix value) { return push(std::move(value), true, {}); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  Index rows(Var v) const { return nodes_[v.id].value.rows(); }
  Index cols(Var v) const { return nodes_[v.id].value.cols(); }

  // Adjoint after backward(); zero matrix when no path reached the node.
  Matrix grad(Var v) const {
    const Node& node = nodes_[v.id];
    if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  void backward(Var out) {
    require(rows(out) == 1 && cols(out) == 1, ErrorKind::kShape,
            "Graph::backward expects a scalar output");
    for (auto& node : nodes_) node.grad.resize(0, 0);
    adj(out) = Matrix::Ones(1, 1);
    for (int i = out.id; i >= 0; --i) {
      Node& node = nodes_[i];
      if (node.backward && node.grad.size() != 0) node.backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise and linear ops ----

  Var matmul(Var A, Var X) {
    require(cols(A) == rows(X), ErrorKind::kShape, "matmul shape mismatch");
    Var out = push(value(A) * value(X), needs(A) || needs(X), {});
    set_backward(out, [this, A, X, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(A)) adj(A).noalias() += g * value(X).transpose();
      if (needs(X)) adj(X).noalias() += value(A).transpose() * g;
    });
    return out;
  }

  Var matmul_const(const Matrix& A, Var X) {
    require(A.cols() == rows(X), ErrorKind::kShape, "matmul_const shape mismatch");
    Var out = push(A * value(X), needs(X), {});
    set_backward(out, [this, A, X, out] { adj(X).noalias() += A.transpose() * nodes_[out.id].grad; });
    return out;
  }

  Var add(Var a, Var b) {
    require_same(a, b, "add");
    Var out = push(value(a) + value(b), needs(a) || needs(b), {});
    set_backward(out, [this, a, b, out] {
      if (needs(a)) adj(a) += nodes_[out.id].grad;
      if (needs(b)) adj(b) += nodes_[out.id].grad;
    });
    return out;
  }

  Var sub(Var a, Var b) {
    require_same(a, b, "sub");
    Var out = push(value(a) - value(b), needs(a) || needs(b), {});
    set_backward(out, [this, a, b, out] {
      if (needs(a)) adj(a) += nodes_[out.id].grad;
      if (needs(b)) adj(b) -= nodes_[out.id].grad;
    });
    return out;
  }

  Var cwise_mul(Var a, Var b) {
    require_same(a, b, "cwise_mul");
    Var out = push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), {});
    set_backward(out, [this, a, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(a)) adj(a) += g.cwiseProduct(value(b));
      if (needs(b)) adj(b) += g.cwiseProduct(value(a));
    });
    return out;
  }

  Var scale(Var a, double s) {
    Var out = push(value(a) * s, needs(a), {});
    set_backward(out, [this, a, s, out] { adj(a) += s * nodes_[out.id].grad; });
    return out;
  }

  // Adds a column vector to every column. b may be a Var (p x 1).
  Var add_colwise(Var X, Var b) {
    require(cols(b) == 1 && rows(b) == rows(X), ErrorKind::kShape, "add_colwise shape mismatch");
    Matrix v = value(X);
    v.colwise() += value(b).col(0);
    Var out = push(std::move(v), needs(X) || needs(b), {});
    set_backward(out, [this, X, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(X)) adj(X) += g;
      if (needs(b)) adj(b) += g.rowwise().sum();
    });
    return out;
  }

  Var add_col_const(Var X, const Vector& c) {
    require(c.size() == rows(X), ErrorKind::kShape, "add_col_const shape mismatch");
    Matrix v = value(X);
    v.colwise() += c;
    Var out = push(std::move(v), needs(X), {});
    set_backward(out, [this, X, out] { adj(X) += nodes_[out.id].grad; });
    return out;
  }

  Var scale_rows_const(Var X, const Vector& s) {
    require(s.size() == rows(X), ErrorKind::kShape, "scale_rows_const shape mismatch");
    Var out = push(s.asDiagonal() * value(X), needs(X), {});
    set_backward(out, [this, X, s, out] { adj(X) += s.asDiagonal() * nodes_[out.id].grad; });
    return out;
  }

  // Multiplies every row of X by the row vector r (1 x B).
  Var mul_rowwise(Var X, Var r) {
    require(rows(r) == 1 && cols(r) == cols(X), ErrorKind::kShape, "mul_rowwise shape mismatch");
    Matrix v = value(X).array().rowwise() * value(r).row(0).array();
    Var out = push(std::move(v), needs(X) || needs(r), {});
    set_backward(out, [this, X, r, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(X)) adj(X) += (g.array().rowwise() * value(r).row(0).array()).matrix();
      if (needs(r)) adj(r) += g.cwiseProduct(value(X)).colwise().sum();
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = push(value(a).array().tanh().matrix(), needs(a), {});
    set_backward(out, [this, a, out] {
      adj(a) += nodes_[out.id].grad.cwiseProduct(
          (1.0 - value(out).array().square()).matrix());
    });
    return out;
  }

  // 1 - h^2, the tanh derivative expressed in terms of the activation.
  Var one_minus_square(Var h) {
    Var out = push((1.0 - value(h).array().square()).matrix(), needs(h), {});
    set_backward(out, [this, h, out] {
      adj(h) += (-2.0 * nodes_[out.id].grad.array() * value(h).array()).matrix();
    });
    return out;
  }

  // log(1 + exp(x + offset)), evaluated stably.
  Var softplus(Var a, double offset) {
    Matrix v = value(a).unaryExpr([offset](double x) { return softplus_scalar(x + offset); });
    Var out = push(std::move(v), needs(a), {});
    set_backward(out, [this, a, offset, out] {
      adj(a) += nodes_[out.id].grad.cwiseProduct(
          value(a).unaryExpr([offset](double x) { return sigmoid_scalar(x + offset); }));
    });
    return out;
  }

  Var sigmoid(Var a, double offset) {
    Matrix v = value(a).unaryExpr([offset](double x) { return sigmoid_scalar(x + offset); });
    Var out = push(std::move(v), needs(a), {});
    set_backward(out, [this, a, out] {
      const Matrix& s = value(out);
      adj(a) += nodes_[out.id].grad.cwiseProduct((s.array() * (1.0 - s.array())).matrix());
    });
    return out;
  }

  Var square(Var a) { return cwise_mul(a, a); }

  Var slice_rows(Var X, Index start, Index count) {
    require(start >= 0 && start + count <= rows(X), ErrorKind::kShape, "slice_rows out of range");
    Var out = push(value(X).middleRows(start, count), needs(X), {});
    set_backward(out, [this, X, start, count, out] {
      adj(X).middleRows(start, count) += nodes_[out.id].grad;
    });
    return out;
  }

  Var vstack(const std::vector<Var>& parts) {
    require(!parts.empty(), ErrorKind::kShape, "vstack of nothing");
    Index total = 0;
    bool any = false;
    for (Var p : parts) {
      require(cols(p) == cols(parts.front()), ErrorKind::kShape, "vstack column mismatch");
      total += rows(p);
      any = any || needs(p);
    }
    Matrix v(total, cols(parts.front()));
    Index r = 0;
    for (Var p : parts) {
      v.middleRows(r, rows(p)) = value(p);
      r += rows(p);
    }
    Var out = push(std::move(v), any, {});
    set_backward(out, [this, parts, out] {
      Index r0 = 0;
      for (Var p : parts) {
        if (needs(p)) adj(p) += nodes_[out.id].grad.middleRows(r0, rows(p));
        r0 += rows(p);
      }
    });
    return out;
  }

  Var sum_rows(Var X) {
    Var out = push(value(X).colwise().sum(), needs(X), {});
    set_backward(out, [this, X, out] {
      adj(X) += nodes_[out.id].grad.replicate(rows(X), 1);
    });
    return out;
  }

  Var sum_all(Var X) {
    Matrix v(1, 1);
    v(0, 0) = value(X).sum();
    Var out = push(std::move(v), needs(X), {});
    set_backward(out, [this, X, out] {
      adj(X).array() += nodes_[out.id].grad(0, 0);
    });
    return out;
  }

  // ---- batched small-matrix ops ----

  // P = L_A L_B^T + L_B L_A^T for packed lower factors; output (n*n) x B.
  Var sym_lower_product(Var A, Var B, Index n) {
    require(rows(A) == rows(B) && cols(A) == cols(B), ErrorKind::kShape,
            "sym_lower_product shape mismatch");
    const Index batch = cols(A);
    Matrix v(n * n, batch);
    for (Index c = 0; c < batch; ++c) {
      const Matrix La = unpack_lower(value(A).col(c), n);
      const Matrix Lb = unpack_lower(value(B).col(c), n);
      Matrix P = La * Lb.transpose() + Lb * La.transpose();
      v.col(c) = Eigen::Map<const Vector>(P.data(), n * n);
    }
    Var out = push(std::move(v), needs(A) || needs(B), {});
    set_backward(out, [this, A, B, n, out] {
      const Index batch = cols(A);
      const Index packed = rows(A);
      for (Index c = 0; c < batch; ++c) {
        Matrix G = Eigen::Map<const Matrix>(nodes_[out.id].grad.col(c).data(), n, n);
        const Matrix S = G + G.transpose();
        if (needs(A)) adj(A).col(c) += pack_lower(S * unpack_lower(value(B).col(c), n), packed);
        if (needs(B)) adj(B).col(c) += pack_lower(S * unpack_lower(value(A).col(c), n), packed);
      }
    });
    return out;
  }

  // y = M v per column, M given as (n*n) x B.
  Var batched_matvec(Var M, Var v, Index n) {
    require(rows(M) == n * n && rows(v) == n && cols(M) == cols(v), ErrorKind::kShape,
            "batched_matvec shape mismatch");
    const Index batch = cols(v);
    Matrix y(n, batch);
    for (Index c = 0; c < batch; ++c) {
      y.col(c) = Eigen::Map<const Matrix>(value(M).col(c).data(), n, n) * value(v).col(c);
    }
    Var out = push(std::move(y), needs(M) || needs(v), {});
    set_backward(out, [this, M, v, n, out] {
      const Index batch = cols(v);
      for (Index c = 0; c < batch; ++c) {
        const auto g = nodes_[out.id].grad.col(c);
        if (needs(M)) {
          Matrix gm = g * value(v).col(c).transpose();
          adj(M).col(c) += Eigen::Map<const Vector>(gm.data(), n * n);
        }
        if (needs(v)) {
          adj(v).col(c) += Eigen::Map<const Matrix>(value(M).col(c).data(), n, n).transpose() * g;
        }
      }
    });
    return out;
  }

  // x = M^{-1} b per column for symmetric positive-definite M.
  Var batched_spd_solve(Var M, Var b, Index n) {
    require(rows(M) == n * n && rows(b) == n && cols(M) == cols(b), ErrorKind::kShape,
            "batched_spd_solve shape mismatch");
    const Index batch = cols(b);
    Matrix x(n, batch);
    for (Index c = 0; c < batch; ++c) {
      Eigen::LLT<Matrix> llt(Eigen::Map<const Matrix>(value(M).col(c).data(), n, n));
      require(llt.info() == Eigen::Success, ErrorKind::kInvalidArg,
              "mass matrix factorization failed");
      x.col(c) = llt.solve(value(b).col(c));
    }
    Var out = push(std::move(x), needs(M) || needs(b), {});
    set_backward(out, [this, M, b, n, out] {
      const Index batch = cols(b);
      for (Index c = 0; c < batch; ++c) {
        Eigen::LLT<Matrix> llt(Eigen::Map<const Matrix>(value(M).col(c).data(), n, n));
        const Vector gb = llt.solve(nodes_[out.id].grad.col(c));
        if (needs(b)) adj(b).col(c) += gb;
        if (needs(M)) {
          Matrix gm = -gb * value(out).col(c).transpose();
          adj(M).col(c) += Eigen::Map<const Vector>(gm.data(), n * n);
        }
      }
    });
    return out;
  }

  static double softplus_scalar(double x) {
    return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
  }
  static double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool requires_grad, std::function<void()> fn) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(fn)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_backward(Var v, std::function<void()> fn) {
    if (nodes_[v.id].requires_grad) nodes_[v.id].backward = std::move(fn);
  }

  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  Matrix& adj(Var v) {
    Node& node = nodes_[v.id];
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  void require_same(Var a, Var b, const char* op) {
    require(rows(a) == rows(b) && cols(a) == cols(b), ErrorKind::kShape,
            std::string(op) + " shape mismatch");
  }

  std::vector<Node> nodes_;
};

}  // namespace lagmpc::diffnet
