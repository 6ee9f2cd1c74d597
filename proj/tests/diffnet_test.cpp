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

#include <filesystem>

#include "lagmpc/diffnet/checkpoint.hpp"
#include "lagmpc/diffnet/graph.hpp"
#include "lagmpc/diffnet/mlp.hpp"
#include "lagmpc/diffnet/ops.hpp"
#include "test_util.hpp"

namespace lagmpc::diffnet {
namespace {

using testing::fd_jacobian;
using testing::max_rel_err;

TEST(MlpForward, IdentityLinearLayer) {
  Mlp net({2, 2});
  net.layer(0).weight = Matrix::Identity(2, 2);
  Vector x(2);
  x << 1.0, 2.0;
  EXPECT_EQ(net.forward(x), x);
}

TEST(MlpForward, ZeroWeightsGiveOutputBias) {
  Mlp net({3, 1, 2});
  net.layer(1).bias << 0.25, -1.5;
  Vector x(3);
  x << 4.0, -2.0, 7.0;
  const Vector y = net.forward(x);
  EXPECT_DOUBLE_EQ(y[0], 0.25);
  EXPECT_DOUBLE_EQ(y[1], -1.5);
}

TEST(MlpForward, MatchesStraightLineReevaluation) {
  Mlp net = init_mlp({2, 16, 1}, 7);
  Vector x(2);
  x << 0.3, -1.2;
  const auto expected = testing::naive_mlp(net, {0.3, -1.2});
  EXPECT_NEAR(net.forward(x)[0], expected[0], 1e-14);
}

TEST(MlpForward, RejectsWrongInputDimension) {
  Mlp net = init_mlp({3, 4, 1}, 0);
  try {
    net.forward(Vector::Zero(2));
    FAIL() << "expected shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(MlpForward, SideEffectFree) {
  Mlp net = init_mlp({4, 8, 8, 3}, 3);
  Rng rng = make_rng(11);
  const Vector x = testing::random_vector(rng, 4);
  const Vector a = net.forward(x);
  const Vector b = net.forward(x);
  EXPECT_EQ(a, b);
}

TEST(GradInput, LinearLayerJacobianIsWeight) {
  Mlp net = init_mlp({3, 2}, 5);
  Vector x(3);
  x << 0.1, 0.2, 0.3;
  EXPECT_LT((grad_input(net, x) - net.layer(0).weight).norm(), 1e-15);
}

TEST(GradInput, TanhSlopeAtZeroIsOne) {
  Mlp net({1, 1, 1});
  net.layer(0).weight(0, 0) = 1.0;
  net.layer(1).weight(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(grad_input(net, Vector::Zero(1))(0, 0), 1.0);
}

TEST(GradInput, MatchesFiniteDifferences) {
  Mlp net = init_mlp({3, 8, 2}, 9);
  Rng rng = make_rng(2);
  const Vector x = testing::random_vector(rng, 3);
  const Matrix J = grad_input(net, x);
  const Matrix Jfd = fd_jacobian([&](const Vector& v) { return net.forward(v); }, x);
  EXPECT_LE(max_rel_err(J, Jfd), 1e-6);
}

TEST(GradParams, ZeroUpstreamGivesZeroGradient) {
  Mlp net = init_mlp({3, 5, 2}, 1);
  const MlpGradient g = grad_params(net, Vector::Ones(3), Vector::Zero(2));
  EXPECT_EQ(g.flat().norm(), 0.0);
}

TEST(GradParams, LinearLayerFirstRowIsInput) {
  Mlp net = init_mlp({3, 2}, 1);
  Vector x(3);
  x << 1.0, -2.0, 0.5;
  Vector e1 = Vector::Zero(2);
  e1[0] = 1.0;
  const MlpGradient g = grad_params(net, x, e1);
  EXPECT_EQ(Vector(g.layers[0].weight.row(0).transpose()), x);
  EXPECT_EQ(g.layers[0].weight.row(1).norm(), 0.0);
  EXPECT_EQ(g.layers[0].bias[0], 1.0);
  EXPECT_EQ(g.layers[0].bias[1], 0.0);
}

// Finite differences over every parameter of upstream' * f(x).
Vector fd_param_gradient(const Mlp& net, const Vector& x, const Vector& upstream) {
  Mlp probe = net;
  const Vector theta = net.flat_parameters();
  Vector g(theta.size());
  const double h = 1e-5;
  for (Index k = 0; k < theta.size(); ++k) {
    Vector tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    probe.set_flat_parameters(tp);
    const double fp = upstream.dot(probe.forward(x));
    probe.set_flat_parameters(tm);
    const double fm = upstream.dot(probe.forward(x));
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

TEST(GradParams, MatchesFiniteDifferences) {
  Mlp net = init_mlp({3, 6, 6, 2}, 4);
  Rng rng = make_rng(3);
  const Vector x = testing::random_vector(rng, 3);
  const Vector up = testing::random_vector(rng, 2);
  EXPECT_LE(max_rel_err(grad_params(net, x, up).flat(), fd_param_gradient(net, x, up)), 1e-6);
}

TEST(GradientProperty, HundredRandomDrawsAgreeWithFiniteDifferences) {
  Rng rng = make_rng(100);
  double worst_input = 0.0, worst_param = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const Index in = 1 + draw % 4, hidden = 3 + draw % 5, out = 1 + draw % 3;
    Mlp net = init_mlp({in, hidden, hidden, out}, 1000 + draw);
    net.set_input_normalization(testing::random_vector(rng, in, 0.5),
                                Vector::Constant(in, 0.5) + testing::random_vector(rng, in, 0.3).cwiseAbs());
    const Vector x = testing::random_vector(rng, in, 2.0);
    const Vector up = testing::random_vector(rng, out);
    worst_input = std::max(worst_input, max_rel_err(grad_input(net, x),
                                                    fd_jacobian([&](const Vector& v) { return net.forward(v); }, x)));
    worst_param = std::max(worst_param, max_rel_err(grad_params(net, x, up).flat(), fd_param_gradient(net, x, up)));
  }
  EXPECT_LE(worst_input, 1e-6);
  EXPECT_LE(worst_param, 1e-6);
}

TEST(GradientProperty, CompositionJacobianIsProduct) {
  Mlp inner = init_mlp({3, 7, 4}, 21);
  Mlp outer = init_mlp({4, 5, 2}, 22);
  Rng rng = make_rng(5);
  const Vector x = testing::random_vector(rng, 3);
  const Matrix chained = grad_input(outer, inner.forward(x)) * grad_input(inner, x);
  const Matrix fd = fd_jacobian([&](const Vector& v) { return outer.forward(inner.forward(v)); }, x);
  EXPECT_LE(max_rel_err(chained, fd), 1e-6);
}

TEST(Init, DeterministicForSeed) {
  const Mlp a = init_mlp({5, 9, 2}, 42);
  const Mlp b = init_mlp({5, 9, 2}, 42);
  EXPECT_EQ(a.flat_parameters(), b.flat_parameters());
  const Mlp c = init_mlp({5, 9, 2}, 43);
  EXPECT_NE(a.flat_parameters(), c.flat_parameters());
}

TEST(Init, ParameterCountArithmetic) {
  EXPECT_EQ(init_mlp({36, 256, 256, 1}, 0).parameter_count(),
            36 * 256 + 256 + 256 * 256 + 256 + 256 * 1 + 1);
  EXPECT_EQ(init_mlp({36, 256, 256, 1}, 0).parameter_count(), 75521);
}

TEST(Init, UniformFanInBound) {
  const Mlp net = init_mlp({16, 64, 4}, 8);
  EXPECT_LE(net.layer(0).weight.cwiseAbs().maxCoeff(), 1.0 / 4.0);
  EXPECT_LE(net.layer(1).weight.cwiseAbs().maxCoeff(), 1.0 / 8.0);
}

// Scalar functional built from every graph op, checked by finite differences
// with respect to the leaf values.
TEST(Graph, OpsMatchFiniteDifferences) {
  const Index n = 3, batch = 4;
  std::srand(77);
  Matrix Lraw = Matrix::Random(6, batch);
  Matrix Ldir = Matrix::Random(6, batch);
  Matrix v = Matrix::Random(n, batch);
  Matrix W = Matrix::Random(2, n);

  auto evaluate = [&](auto& ops, auto Lr, auto Ld, auto vv, auto WW) {
    auto diag = ops.softplus(ops.slice_rows(Lr, 0, n), 0.1);
    auto L = ops.vstack({diag, ops.slice_rows(Lr, n, 3)});
    auto M = ops.add_col_const(ops.scale(ops.sym_lower_product(L, L, n), 0.5),
                               Vector::Map(Matrix(Matrix::Identity(n, n)).data(), n * n));
    auto Md = ops.sym_lower_product(L, ops.mul_rowwise(Ld, ops.slice_rows(vv, 0, 1)), n);
    auto x = ops.batched_spd_solve(M, vv, n);
    auto y = ops.add(ops.batched_matvec(Md, x, n), ops.tanh(vv));
    auto z = ops.matmul(WW, ops.cwise_mul(y, ops.one_minus_square(ops.tanh(vv))));
    auto s = ops.sigmoid(ops.sum_rows(ops.square(z)), -0.2);
    return ops.sum_all(ops.sub(ops.scale(s, 3.0), ops.sum_rows(ops.square(x))));
  };

  Graph graph;
  GraphOps gops{&graph};
  auto vL = graph.parameter(Lraw), vD = graph.parameter(Ldir), vv = graph.parameter(v),
       vW = graph.parameter(W);
  auto out = evaluate(gops, vL, vD, vv, vW);
  graph.backward(out);

  EigenOps eops;
  auto scalar = [&](const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d) {
    return eops.value(evaluate(eops, a, b, c, d))(0, 0);
  };
  EXPECT_NEAR(graph.value(out)(0, 0), scalar(Lraw, Ldir, v, W), 1e-14);

  auto check = [&](Matrix& leaf, Graph::Var var) {
    const Matrix g = graph.grad(var);
    Matrix fd(leaf.rows(), leaf.cols());
    for (Index i = 0; i < leaf.rows(); ++i)
      for (Index j = 0; j < leaf.cols(); ++j) {
        const double keep = leaf(i, j);
        leaf(i, j) = keep + 1e-5;
        const double fp = scalar(Lraw, Ldir, v, W);
        leaf(i, j) = keep - 1e-5;
        const double fm = scalar(Lraw, Ldir, v, W);
        leaf(i, j) = keep;
        fd(i, j) = (fp - fm) / 2e-5;
      }
    EXPECT_LE(max_rel_err(g, fd), 1e-6);
  };
  check(Lraw, vL);
  check(Ldir, vD);
  check(v, vv);
  check(W, vW);
}

TEST(ApplyMlp, TangentsEqualJacobianColumns) {
  Mlp net = init_mlp({3, 10, 10, 4}, 12);
  net.set_input_normalization(Vector::Constant(3, 0.2), Vector::Constant(3, 1.7));
  net.set_output_affine(Vector::Constant(4, -0.3), Vector::Constant(4, 2.5));
  Rng rng = make_rng(6);
  const Vector x = testing::random_vector(rng, 3);
  EigenOps ops;
  auto bound = bind(ops, net);
  std::vector<Matrix> dirs;
  for (Index k = 0; k < 3; ++k) dirs.push_back(unit_direction(3, k, 1));
  auto out = apply_mlp(ops, bound, Matrix(x), dirs);
  const Matrix J = grad_input(net, x);
  EXPECT_LT((out.value.col(0) - net.forward(x)).norm(), 1e-14);
  for (Index k = 0; k < 3; ++k) EXPECT_LT((out.tangents[k].col(0) - J.col(k)).norm(), 1e-13);
}

TEST(ApplyMlp, GraphParameterGradientMatchesTape) {
  Mlp net = init_mlp({3, 6, 2}, 13);
  Rng rng = make_rng(8);
  const Vector x = testing::random_vector(rng, 3);
  const Vector up = testing::random_vector(rng, 2);
  Graph graph;
  GraphOps ops{&graph};
  auto bound = bind(ops, net);
  auto y = apply_mlp(ops, bound, graph.constant(x));
  auto loss = graph.sum_all(graph.cwise_mul(y.value, graph.constant(up)));
  graph.backward(loss);
  EXPECT_LT((gradient_of(graph, bound).flat() - grad_params(net, x, up).flat()).norm(), 1e-13);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint ck;
  Mlp net = init_mlp({4, 7, 3}, 99);
  net.set_input_normalization(Vector::Constant(4, 0.1), Vector::Constant(4, 3.0));
  ck.put_mlp("policy", net);
  Matrix odd(2, 3);
  odd << 1.0 / 3.0, -0.0, 1e-300, std::numeric_limits<double>::max(), -7.25, 2.0;
  ck.set_tensor("misc/odd", odd);
  ck.set_meta("variant", "lnn_diag");
  const auto path = std::filesystem::temp_directory_path() / "lagmpc_ckpt_roundtrip.ckpt";
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  EXPECT_EQ(back.meta("variant"), "lnn_diag");
  const Matrix& o = back.tensor("misc/odd");
  for (Index i = 0; i < odd.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(o.data()[i]), std::bit_cast<std::uint64_t>(odd.data()[i]));
  }
  const Mlp net2 = back.get_mlp("policy");
  EXPECT_EQ(net2.flat_parameters(), net.flat_parameters());
  EXPECT_EQ(net2.input_scale(), net.input_scale());
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    Checkpoint::load("/nonexistent/dir/x.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

}  // namespace
}  // namespace lagmpc::diffnet
