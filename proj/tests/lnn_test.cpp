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

#include <numbers>

#include "lagmpc/lnn/model.hpp"
#include "lagmpc/sim/systems.hpp"
#include "test_util.hpp"

namespace lagmpc {
namespace {

using lnn::GeneralizedState;
using lnn::LnnConfig;
using lnn::LnnModel;
using lnn::MassStructure;
using testing::random_vector;

LnnModel small_model(Index n, MassStructure s, std::uint64_t seed, Matrix B = {}) {
  LnnConfig cfg;
  cfg.dof = n;
  cfg.mass_structure = s;
  cfg.hidden = {16, 16};
  cfg.actuation = std::move(B);
  return LnnModel(cfg, seed);
}

// Makes a network ignore its input and emit `bias`.
void make_constant(diffnet::Mlp& net, const Vector& bias) {
  auto& last = net.layer(net.num_layers() - 1);
  last.weight.setZero();
  last.bias = bias;
}

// Raw chol output whose softplus diagonal equals `target`.
double raw_for(double target) { return std::log(std::exp(target) - 1.0) - lnn::kSoftplusOffset; }

// Directional derivative of M along v by Richardson-extrapolated central
// differences; truncation error O(h^4).
Matrix mass_derivative_along(const LnnModel& m, const Vector& q, const Vector& v) {
  auto central = [&](double h) {
    return Matrix((lnn::mass_matrix(m, q + h * v) - lnn::mass_matrix(m, q - h * v)) / (2.0 * h));
  };
  const double h = 1e-3;
  return (4.0 * central(h / 2) - central(h)) / 3.0;
}

TEST(MassMatrix, IdentityFactor) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 1);
  make_constant(m.chol_net, (Vector(3) << raw_for(1.0), raw_for(1.0), 0.0).finished());
  const Matrix M = lnn::mass_matrix(m, Vector::Random(2));
  EXPECT_LT((M - 1.0001 * Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(MassMatrix, DiagonalModeAlgebra) {
  LnnModel m = small_model(2, MassStructure::kDiagonal, 2);
  make_constant(m.chol_net, (Vector(2) << 0.3, -1.2).finished());
  const double a = diffnet::Graph::softplus_scalar(0.3 + lnn::kSoftplusOffset);
  const double b = diffnet::Graph::softplus_scalar(-1.2 + lnn::kSoftplusOffset);
  const Matrix M = lnn::mass_matrix(m, Vector::Random(2));
  EXPECT_NEAR(M(0, 0), a * a + 1e-4, 1e-14);
  EXPECT_NEAR(M(1, 1), b * b + 1e-4, 1e-14);
  EXPECT_EQ(M(0, 1), 0.0);
  EXPECT_EQ(M(1, 0), 0.0);
}

TEST(MassMatrix, SoftplusOffsetGivesHalf) {
  EXPECT_NEAR(diffnet::Graph::softplus_scalar(lnn::kSoftplusOffset), 0.5, 1e-15);
}

TEST(MassMatrix, SymmetricPositiveDefiniteOver1000Draws) {
  Rng rng = make_rng(11);
  for (int draw = 0; draw < 1000; ++draw) {
    const Index n = 1 + draw % 3;
    const auto s = draw % 2 ? MassStructure::kDiagonal : MassStructure::kFullCholesky;
    LnnModel m = small_model(n, s, 1000 + draw / 50);
    const Matrix M = lnn::mass_matrix(m, random_vector(rng, n, 5.0));
    ASSERT_LT((M - M.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    ASSERT_GE(es.eigenvalues().minCoeff(), m.eps() * (1.0 - 1e-9)) << "draw " << draw;
  }
}

TEST(Terms, ConstantMassHasNoCoriolis) {
  LnnModel m = small_model(3, MassStructure::kFullCholesky, 3);
  make_constant(m.chol_net, Vector::LinSpaced(6, -0.5, 0.7));
  Rng rng = make_rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto t = lnn::lagrangian_terms(m, random_vector(rng, 3, 2.0), random_vector(rng, 3, 3.0));
    EXPECT_LT(t.Cqdot.norm(), 1e-14);
  }
}

TEST(Terms, LinearPotentialGivesConstantGravity) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 4);
  // A single linear layer V = g0 . q + c.
  diffnet::Mlp pot({2, 1});
  pot.layer(0).weight << 0.7, -2.5;
  pot.layer(0).bias << 0.1;
  m.pot_net = pot;
  Rng rng = make_rng(4);
  for (int i = 0; i < 10; ++i) {
    const auto t = lnn::lagrangian_terms(m, random_vector(rng, 2, 3.0), random_vector(rng, 2));
    EXPECT_NEAR(t.G[0], 0.7, 1e-14);
    EXPECT_NEAR(t.G[1], -2.5, 1e-14);
  }
}

TEST(Terms, GravityMatchesPotentialFiniteDifference) {
  LnnModel m = small_model(3, MassStructure::kFullCholesky, 5);
  Rng rng = make_rng(5);
  const Vector q = random_vector(rng, 3), qd = random_vector(rng, 3);
  const auto t = lnn::lagrangian_terms(m, q, qd);
  const Matrix J = testing::fd_jacobian(
      [&](const Vector& x) { return Vector::Constant(1, m.pot_net.forward(x)[0]); }, q);
  EXPECT_LT(testing::max_rel_err(t.G.transpose(), J), 1e-7);
}

TEST(Terms, CoriolisMatchesDirectContraction) {
  Rng rng = make_rng(6);
  for (auto s : {MassStructure::kFullCholesky, MassStructure::kDiagonal}) {
    LnnModel m = small_model(3, s, 6);
    const Vector q = random_vector(rng, 3), qd = random_vector(rng, 3, 2.0);
    // Cqdot = Mdot qd - 1/2 [qd^T dM/dq_k qd]_k with dM/dq_k from differences.
    const Matrix Mdot = mass_derivative_along(m, q, qd);
    Vector quad(3);
    for (Index k = 0; k < 3; ++k) {
      Vector e = Vector::Zero(3);
      e[k] = 1.0;
      quad[k] = qd.dot(mass_derivative_along(m, q, e) * qd);
    }
    const Vector expected = Mdot * qd - 0.5 * quad;
    EXPECT_LT((lnn::lagrangian_terms(m, q, qd).Cqdot - expected).norm(), 1e-9 * (1.0 + expected.norm()));
  }
}

TEST(Invariants, PowerBalance) {
  Rng rng = make_rng(7);
  for (int draw = 0; draw < 50; ++draw) {
    const Index n = 1 + draw % 3;
    LnnModel m = small_model(n, draw % 2 ? MassStructure::kDiagonal : MassStructure::kFullCholesky, 70 + draw);
    const Vector q = random_vector(rng, n, 2.0), qd = random_vector(rng, n, 2.0);
    const double lhs = qd.dot(lnn::lagrangian_terms(m, q, qd).Cqdot);
    const double rhs = 0.5 * qd.dot(mass_derivative_along(m, q, qd) * qd);
    EXPECT_NEAR(lhs, rhs, 1e-8 * (1.0 + std::abs(rhs))) << "draw " << draw;
  }
}

TEST(Invariants, PointwiseEnergyConsistency) {
  Rng rng = make_rng(8);
  for (int draw = 0; draw < 50; ++draw) {
    const Index n = 1 + draw % 3;
    LnnModel m = small_model(n, MassStructure::kFullCholesky, 80 + draw);
    m.use_external = false;
    const Vector q = random_vector(rng, n, 2.0), qd = random_vector(rng, n, 2.0);
    const auto t = lnn::lagrangian_terms(m, q, qd);
    const Vector qdd = lnn::forward_dynamics(m, q, qd, Vector::Zero(n));
    // dE/dt with E = 1/2 qd^T M qd + V, Mdot taken independently.
    const Matrix Mdot = mass_derivative_along(m, q, qd);
    const double dE = qd.dot(t.M * qdd) + 0.5 * qd.dot(Mdot * qd) + t.G.dot(qd);
    const double scale = std::abs(qd.dot(t.M * qdd)) + std::abs(t.G.dot(qd)) + 1.0;
    EXPECT_LT(std::abs(dE), 1e-8 * scale) << "draw " << draw;
  }
}

TEST(Forward, ZeroModelGivesZeroAcceleration) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 9);
  make_constant(m.chol_net, (Vector(3) << raw_for(1.0), raw_for(1.0), 0.0).finished());
  make_constant(m.pot_net, Vector::Zero(1));
  make_constant(m.ext_net, Vector::Zero(2));
  EXPECT_LT(lnn::forward_dynamics(m, Vector::Random(2), Vector::Random(2), Vector::Zero(2)).norm(), 1e-14);
}

TEST(Forward, AnalyticPendulumFromHorizontal) {
  sim::AnalyticModel pend(sim::make_system("pendulum"));
  const Vector qdd = lnn::forward_dynamics(pend, Vector::Constant(1, std::numbers::pi / 2), Vector::Zero(1),
                                           Vector::Zero(1));
  EXPECT_NEAR(qdd[0], -9.81, 1e-12);
}

TEST(Forward, SolveResidual) {
  LnnModel m = small_model(3, MassStructure::kFullCholesky, 10);
  Rng rng = make_rng(10);
  const Vector q = random_vector(rng, 3), qd = random_vector(rng, 3), u = random_vector(rng, 3);
  const auto t = lnn::lagrangian_terms(m, q, qd);
  const Vector rhs = u + t.H - t.Cqdot - t.G;
  const Vector qdd = lnn::forward_dynamics(m, q, qd, u);
  EXPECT_LE((t.M * qdd - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(Inverse, ZeroModelZeroAcceleration) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 12);
  make_constant(m.chol_net, (Vector(3) << 0.4, -0.2, 0.3).finished());
  make_constant(m.pot_net, Vector::Zero(1));
  make_constant(m.ext_net, Vector::Zero(2));
  EXPECT_LT(lnn::inverse_dynamics(m, Vector::Random(2), Vector::Random(2), Vector::Zero(2)).norm(), 1e-14);
}

TEST(Inverse, ConstantMassTwo) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 13);
  m.set_flat_parameters(m.flat_parameters());
  const double d = raw_for(std::sqrt(2.0 - 1e-4));
  make_constant(m.chol_net, (Vector(3) << d, d, 0.0).finished());
  make_constant(m.pot_net, Vector::Zero(1));
  make_constant(m.ext_net, Vector::Zero(2));
  const Vector tau = lnn::inverse_dynamics(m, Vector::Random(2), Vector::Random(2), Vector::Ones(2));
  EXPECT_NEAR(tau[0], 2.0, 1e-12);
  EXPECT_NEAR(tau[1], 2.0, 1e-12);
}

TEST(RoundTrip, FullyActuated) {
  Rng rng = make_rng(14);
  for (int draw = 0; draw < 30; ++draw) {
    const Index n = 1 + draw % 3;
    LnnModel m = small_model(n, draw % 2 ? MassStructure::kDiagonal : MassStructure::kFullCholesky, 140 + draw);
    const Vector q = random_vector(rng, n, 2.0), qd = random_vector(rng, n, 2.0), u = random_vector(rng, n, 3.0);
    const Vector qdd = lnn::forward_dynamics(m, q, qd, u);
    const Vector back = lnn::inverse_dynamics(m, q, qd, qdd);
    EXPECT_LT((back - u).norm(), 1e-8 * (1.0 + u.norm()));
    // and the other direction
    const Vector qdd2 = lnn::forward_dynamics(m, q, qd, lnn::inverse_dynamics(m, q, qd, qdd));
    EXPECT_LT((qdd2 - qdd).norm(), 1e-8 * (1.0 + qdd.norm()));
  }
}

TEST(RoundTrip, Underactuated) {
  Rng rng = make_rng(15);
  Matrix B = Matrix::Zero(3, 2);
  B(0, 0) = 1.0;
  B(2, 1) = 1.0;
  LnnModel m = small_model(3, MassStructure::kFullCholesky, 15, B);
  for (int draw = 0; draw < 20; ++draw) {
    const Vector q = random_vector(rng, 3), qd = random_vector(rng, 3), u = random_vector(rng, 2, 3.0);
    const Vector qdd = lnn::forward_dynamics(m, q, qd, u);
    const auto split = lnn::split_actuation(m, lnn::inverse_dynamics(m, q, qd, qdd));
    EXPECT_LT((split.u - u).norm(), 1e-8 * (1.0 + u.norm()));
    ASSERT_EQ(split.root_residual.size(), 1);
    EXPECT_LT(std::abs(split.root_residual[0]), 1e-8);
  }
}

TEST(Structure, DiagonalAndFullAgreeWithZeroOffDiagonal) {
  LnnModel full = small_model(3, MassStructure::kFullCholesky, 16);
  LnnModel diag = small_model(3, MassStructure::kDiagonal, 16);
  // Copy the diagonal head of the full chol_net into the diagonal net and
  // force the off-diagonal outputs to zero.
  auto& last_full = full.chol_net.layer(full.chol_net.num_layers() - 1);
  last_full.weight.bottomRows(3).setZero();
  last_full.bias.tail(3).setZero();
  const std::size_t layers = full.chol_net.num_layers();
  for (std::size_t l = 0; l + 1 < layers; ++l) diag.chol_net.layer(l) = full.chol_net.layer(l);
  auto& last_diag = diag.chol_net.layer(layers - 1);
  last_diag.weight = Matrix(last_full.weight.topRows(3));
  last_diag.bias = Vector(last_full.bias.head(3));
  diag.pot_net = full.pot_net;
  diag.ext_net = full.ext_net;
  Rng rng = make_rng(16);
  for (int i = 0; i < 10; ++i) {
    const Vector q = random_vector(rng, 3), qd = random_vector(rng, 3), u = random_vector(rng, 3);
    const auto a = lnn::lagrangian_terms(full, q, qd), b = lnn::lagrangian_terms(diag, q, qd);
    EXPECT_EQ((a.M - b.M).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((a.Cqdot - b.Cqdot).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((lnn::forward_dynamics(full, q, qd, u) - lnn::forward_dynamics(diag, q, qd, u)).norm(), 0.0);
  }
}

TEST(Step, ZeroAccelerationAtRestIsFixed) {
  LnnModel m = small_model(2, MassStructure::kFullCholesky, 17);
  make_constant(m.pot_net, Vector::Zero(1));
  make_constant(m.ext_net, Vector::Zero(2));
  const GeneralizedState z{Vector::Random(2), Vector::Zero(2)};
  const GeneralizedState next = lnn::step(m, z, Vector::Zero(2));
  EXPECT_EQ((next.q - z.q).norm(), 0.0);
  EXPECT_EQ(next.qdot.norm(), 0.0);
}

TEST(Step, DiscreteUpdateArithmetic) {
  diffnet::EigenOps ops;
  const Matrix q = Matrix::Zero(1, 1), qd = Matrix::Ones(1, 1), qdd = Matrix::Constant(1, 1, 2.0);
  auto [qn, qdn] = lnn::euler_update(ops, q, qd, qdd, 0.01, false);
  EXPECT_NEAR(qn(0, 0), 0.0102, 1e-15);
  EXPECT_NEAR(qdn(0, 0), 1.02, 1e-15);
  auto [qh, qdh] = lnn::euler_update(ops, q, qd, qdd, 0.01, true);
  EXPECT_NEAR(qh(0, 0), 0.0101, 1e-15);
  EXPECT_NEAR(qdh(0, 0), 1.02, 1e-15);
}

TEST(Step, MatchesSimulatorEulerUpdate) {
  const auto spec = sim::make_system("cartpole");
  sim::AnalyticModel model(spec);
  Rng rng = make_rng(18);
  for (int i = 0; i < 10; ++i) {
    const GeneralizedState z{random_vector(rng, 2), random_vector(rng, 2)};
    const Vector u = random_vector(rng, 1, 5.0);
    const auto a = lnn::step(model, z, u);
    const auto b = sim::simulate_step(spec, z, u, sim::Integrator::kEulerPaper);
    EXPECT_EQ((a.q - b.q).norm(), 0.0);
    EXPECT_EQ((a.qdot - b.qdot).norm(), 0.0);
  }
}

// Fine-step comparison against the rk4 reference. With the verbatim
// qddot*dt^2 position term the ten-step drift is 0.5*|qddot|*T*dt, so the
// 1e-4 bound holds for |qddot| below ~5 rad/s^2. The half-step update meets it
// everywhere.
TEST(Step, FineStepAgainstReference) {
  auto spec = sim::make_system("pendulum");
  spec.dt = 0.002;
  Rng rng = make_rng(19);
  auto drift = [&](bool half, double angle_range) {
    sim::AnalyticModel model(spec, half);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      GeneralizedState a{random_vector(rng, 1, angle_range), random_vector(rng, 1, 1.0)};
      GeneralizedState b = a;
      for (int k = 0; k < 10; ++k) {
        a = lnn::step(model, a, Vector::Zero(1));
        b = sim::simulate_step(spec, b, Vector::Zero(1), sim::Integrator::kRk4);
        worst = std::max(worst, std::abs(a.q[0] - b.q[0]));
      }
    }
    return worst;
  };
  EXPECT_LE(drift(false, 0.45), 1e-4);
  EXPECT_LE(drift(true, std::numbers::pi), 1e-4);
}

TEST(SplitActuation, FullyActuated) {
  const auto s = lnn::split_actuation(Matrix::Identity(2, 2), Vector::Constant(2, 1.5));
  EXPECT_EQ(s.root_residual.size(), 0);
  EXPECT_EQ(s.u, Vector::Constant(2, 1.5));
}

TEST(SplitActuation, CartPoleSelection) {
  const auto spec = sim::make_system("cartpole");
  const auto s = lnn::split_actuation(spec.B, (Vector(2) << 3.0, 0.5).finished());
  ASSERT_EQ(s.u.size(), 1);
  ASSERT_EQ(s.root_residual.size(), 1);
  EXPECT_EQ(s.u[0], 3.0);
  EXPECT_EQ(s.root_residual[0], 0.5);
}

TEST(SplitActuation, TrueTrajectoryHasNoRootResidual) {
  const auto spec = sim::make_system("cartpole");
  sim::AnalyticModel model(spec);
  Rng rng = make_rng(20);
  GeneralizedState z{random_vector(rng, 2), random_vector(rng, 2)};
  for (int k = 0; k < 50; ++k) {
    const Vector u = random_vector(rng, 1, 10.0);
    const GeneralizedState next = sim::simulate_step(spec, z, u, sim::Integrator::kEulerPaper);
    // Recover qddot from the q-trajectory alone.
    const Vector qdd = (next.qdot - z.qdot) / spec.dt;
    const auto s = lnn::split_actuation(model, lnn::inverse_dynamics(model, z.q, z.qdot, qdd));
    EXPECT_NEAR(s.u[0], u[0], 1e-9);
    EXPECT_LT(std::abs(s.root_residual[0]), 1e-9);
    z = next;
  }
}

TEST(SplitActuation, RejectsNonSelection) {
  EXPECT_THROW(lnn::split_actuation((Matrix(2, 1) << 0.5, 0.5).finished(), Vector::Zero(2)), Error);
}

TEST(Model, RejectsRankDeficientActuation) {
  LnnConfig cfg;
  cfg.dof = 2;
  cfg.hidden = {4};
  cfg.actuation = Matrix::Zero(2, 1);
  EXPECT_THROW(LnnModel(cfg, 0), Error);
}

TEST(Model, CheckpointRoundTrip) {
  LnnModel m = small_model(2, MassStructure::kDiagonal, 21, (Matrix(2, 1) << 1.0, 0.0).finished());
  m.set_half_step(true);
  diffnet::Checkpoint ck;
  m.save_to(ck, "dyn/");
  const auto path = std::filesystem::temp_directory_path() / "lagmpc_lnn_ck.bin";
  ck.save(path);
  const LnnModel back = LnnModel::load_from(diffnet::Checkpoint::load(path), "dyn/");
  EXPECT_EQ(back.flat_parameters(), m.flat_parameters());
  EXPECT_EQ(back.mass_structure(), MassStructure::kDiagonal);
  EXPECT_EQ(back.eps(), m.eps());
  EXPECT_EQ(back.dt(), m.dt());
  EXPECT_TRUE(back.half_step());
  EXPECT_EQ(back.actuation(), m.actuation());
  std::filesystem::remove(path);
}

// The graph backend evaluates the same terms as the plain backend, and its
// parameter gradient of a forward-dynamics loss matches finite differences.
TEST(Backends, GraphMatchesEigenAndFiniteDifferences) {
  for (auto s : {MassStructure::kFullCholesky, MassStructure::kDiagonal}) {
    LnnModel m = small_model(2, s, 22);
    Rng rng = make_rng(22);
    Matrix Q(2, 4), Qd(2, 4), U(2, 4);
    for (Index c = 0; c < 4; ++c) {
      Q.col(c) = random_vector(rng, 2);
      Qd.col(c) = random_vector(rng, 2);
      U.col(c) = random_vector(rng, 2);
    }
    const Matrix W = Matrix::Random(2, 4);
    auto loss_of = [&](const LnnModel& model) {
      return (lnn::forward_dynamics_batch(model, Q, Qd, U).array() * W.array()).sum();
    };

    diffnet::Graph graph;
    diffnet::GraphOps ops{&graph};
    auto bound = lnn::bind_lnn(ops, m);
    auto terms = lnn::lagrangian_terms(ops, bound, ops.constant(Q), ops.constant(Qd));
    auto qdd = lnn::forward_dynamics_vars(ops, terms, m.actuation(), ops.constant(U));
    EXPECT_LT((graph.value(qdd) - lnn::forward_dynamics_batch(m, Q, Qd, U)).norm(), 1e-12);
    auto loss = ops.sum_all(ops.cwise_mul(qdd, ops.constant(W)));
    graph.backward(loss);
    Vector grad(m.parameter_count());
    grad << diffnet::gradient_of(graph, bound.chol).flat(), diffnet::gradient_of(graph, bound.pot).flat(),
        diffnet::gradient_of(graph, bound.ext).flat();

    const Vector theta = m.flat_parameters();
    LnnModel probe = m;
    double worst = 0.0;
    for (Index k = 0; k < theta.size(); k += 7) {
      Vector tp = theta, tm = theta;
      tp[k] += 1e-6;
      tm[k] -= 1e-6;
      probe.set_flat_parameters(tp);
      const double fp = loss_of(probe);
      probe.set_flat_parameters(tm);
      const double fm = loss_of(probe);
      worst = std::max(worst, testing::rel_err(grad[k], (fp - fm) / 2e-6));
    }
    EXPECT_LT(worst, 1e-5) << to_string(s);
  }
}

}  // namespace
}  // namespace lagmpc
