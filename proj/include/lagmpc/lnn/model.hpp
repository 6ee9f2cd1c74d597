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
#include <concepts>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "lagmpc/diffnet/checkpoint.hpp"
#include "lagmpc/diffnet/ops.hpp"

namespace lagmpc::lnn {

using diffnet::Mlp;

struct GeneralizedState {
  Vector q;
  Vector qdot;

  Index dof() const { return q.size(); }
  Vector stacked() const {
    Vector z(2 * q.size());
    z << q, qdot;
    return z;
  }
  static GeneralizedState from_stacked(const Eigen::Ref<const Vector>& z) {
    const Index n = z.size() / 2;
    return {z.head(n), z.tail(n)};
  }
};

/// Dynamics terms at one state:  M qddot + Cqdot + G = B u + H.
struct LagrangianTerms {
  Matrix M;
  Vector Cqdot;
  Vector G;
  Vector H;
  double V = 0.0;
};

/// The same terms for a batch of states. M holds one column-major n x n
/// matrix per column.
struct TermsBatch {
  Matrix M;      // (n*n) x B
  Matrix Cqdot;  // n x B
  Matrix G;      // n x B
  Matrix H;      // n x B
  Matrix V;      // 1 x B
};

/// Anything that can produce Lagrangian terms for a batch of states. The
/// learned model and the analytic simulators both satisfy this, so every
/// downstream algorithm is written once.
template <class T>
concept LagrangianModel = requires(const T& m, const Matrix& x) {
  { m.dof() } -> std::convertible_to<Index>;
  { m.actuated() } -> std::convertible_to<Index>;
  { m.dt() } -> std::convertible_to<double>;
  { m.half_step() } -> std::convertible_to<bool>;
  { m.actuation() } -> std::convertible_to<const Matrix&>;
  { m.terms_batch(x, x) } -> std::same_as<TermsBatch>;
};

enum class MassStructure { kFullCholesky, kDiagonal };

inline std::string to_string(MassStructure s) {
  return s == MassStructure::kDiagonal ? "diagonal" : "full_cholesky";
}
inline MassStructure mass_structure_from_string(const std::string& s) {
  if (s == "diagonal") return MassStructure::kDiagonal;
  if (s == "full_cholesky") return MassStructure::kFullCholesky;
  throw Error(ErrorKind::kConfig, "unknown mass_structure '" + s + "'");
}

// softplus(x + kSoftplusOffset) = 0.5 at x = 0.
inline const double kSoftplusOffset = std::log(std::exp(0.5) - 1.0);

struct LnnConfig {
  Index dof = 1;
  Matrix actuation;  // n x m; empty means identity
  MassStructure mass_structure = MassStructure::kFullCholesky;
  double eps = 1e-4;
  double dt = 0.02;
  bool half_step = false;  // use 0.5*qddot*dt^2 in the position update
  std::vector<Index> hidden{256, 256};
};

/// Learned Lagrangian dynamics: M = Y Y^T + eps I from chol_net, potential
/// from pot_net, external generalized force from ext_net(q, qdot).
class LnnModel {
 public:
  Mlp chol_net;
  Mlp pot_net;
  Mlp ext_net;
  bool use_external = true;

  LnnModel() = default;

  LnnModel(const LnnConfig& config, std::uint64_t seed)
      : eps_(config.eps), dt_(config.dt), half_step_(config.half_step),
        structure_(config.mass_structure) {
    require(config.dof >= 1, ErrorKind::kInvalidArg, "LnnModel needs dof >= 1");
    require(config.eps > 0.0, ErrorKind::kInvalidArg, "LnnModel eps must be positive");
    require(config.dt > 0.0, ErrorKind::kInvalidArg, "LnnModel dt must be positive");
    const Index n = config.dof;
    set_actuation(config.actuation.size() == 0 ? Matrix(Matrix::Identity(n, n)) : config.actuation);
    const Index packed = diffnet::packed_lower_size(n, structure_ == MassStructure::kDiagonal);
    chol_net = diffnet::init_mlp(diffnet::mlp_sizes(n, config.hidden, packed), stream_seed(seed, 1));
    pot_net = diffnet::init_mlp(diffnet::mlp_sizes(n, config.hidden, 1), stream_seed(seed, 2));
    ext_net = diffnet::init_mlp(diffnet::mlp_sizes(2 * n, config.hidden, n), stream_seed(seed, 3));
  }

  Index dof() const { return B_.rows(); }
  Index actuated() const { return B_.cols(); }
  double dt() const { return dt_; }
  bool half_step() const { return half_step_; }
  double eps() const { return eps_; }
  MassStructure mass_structure() const { return structure_; }
  const Matrix& actuation() const { return B_; }

  void set_actuation(Matrix B) {
    require(B.rows() >= 1 && B.cols() >= 1 && B.cols() <= B.rows(), ErrorKind::kInvalidArg,
            "actuation matrix must be n x m with 1 <= m <= n");
    Eigen::FullPivLU<Matrix> lu(B);
    require(lu.rank() == B.cols(), ErrorKind::kInvalidArg, "actuation matrix must have full column rank");
    B_ = std::move(B);
  }
  void set_half_step(bool on) { half_step_ = on; }
  void set_dt(double dt) { dt_ = dt; }

  Index parameter_count() const {
    return chol_net.parameter_count() + pot_net.parameter_count() + ext_net.parameter_count();
  }

  Vector flat_parameters() const {
    Vector out(parameter_count());
    out << chol_net.flat_parameters(), pot_net.flat_parameters(), ext_net.flat_parameters();
    return out;
  }
  void set_flat_parameters(const Eigen::Ref<const Vector>& flat) {
    require_dim(flat.size(), parameter_count(), "LnnModel parameters");
    Index k = 0;
    for (Mlp* net : {&chol_net, &pot_net, &ext_net}) {
      const Index c = net->parameter_count();
      net->set_flat_parameters(flat.segment(k, c));
      k += c;
    }
  }

  TermsBatch terms_batch(const Matrix& Q, const Matrix& Qd) const;

  void save_to(diffnet::Checkpoint& ck, const std::string& prefix) const {
    ck.put_mlp(prefix + "chol", chol_net);
    ck.put_mlp(prefix + "pot", pot_net);
    ck.put_mlp(prefix + "ext", ext_net);
    ck.set_tensor(prefix + "actuation", B_);
    ck.set_meta(prefix + "mass_structure", to_string(structure_));
    ck.set_meta(prefix + "eps", hexfloat(eps_));
    ck.set_meta(prefix + "dt", hexfloat(dt_));
    ck.set_meta(prefix + "half_step", half_step_ ? "1" : "0");
    ck.set_meta(prefix + "use_external", use_external ? "1" : "0");
  }

  static LnnModel load_from(const diffnet::Checkpoint& ck, const std::string& prefix) {
    LnnModel m;
    m.chol_net = ck.get_mlp(prefix + "chol");
    m.pot_net = ck.get_mlp(prefix + "pot");
    m.ext_net = ck.get_mlp(prefix + "ext");
    m.B_ = ck.tensor(prefix + "actuation");
    m.structure_ = mass_structure_from_string(ck.meta(prefix + "mass_structure"));
    m.eps_ = std::stod(ck.meta(prefix + "eps"));
    m.dt_ = std::stod(ck.meta(prefix + "dt"));
    m.half_step_ = ck.meta(prefix + "half_step") == "1";
    m.use_external = ck.meta(prefix + "use_external") == "1";
    return m;
  }

  static std::string hexfloat(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
  }

 private:
  double eps_ = 1e-4;
  double dt_ = 0.02;
  bool half_step_ = false;
  MassStructure structure_ = MassStructure::kFullCholesky;
  Matrix B_;
};

template <class Ops>
struct BoundLnn {
  const LnnModel* model = nullptr;
  diffnet::BoundMlp<Ops> chol, pot, ext;
};

template <class Ops>
BoundLnn<Ops> bind_lnn(const Ops& ops, const LnnModel& model) {
  return {&model, diffnet::bind(ops, model.chol_net), diffnet::bind(ops, model.pot_net),
          diffnet::bind(ops, model.ext_net)};
}

template <class Ops>
struct TermsVars {
  typename Ops::Var M, Cqdot, G, H, V;
};

/// Lagrangian terms for a batch, written once over an evaluation backend.
///
/// Input Jacobians (dY/dq_k and dV/dq_k) are obtained by pushing the unit
/// directions e_k through the networks, one column of the Jacobian per
/// pass, so no finite differences or estimators are involved.
///   Cqdot = (sum_k qdot_k dM/dq_k) qdot - 1/2 [qdot^T dM/dq_k qdot]_k
///   G     = dV/dq
template <class Ops>
TermsVars<Ops> lagrangian_terms(const Ops& ops, const BoundLnn<Ops>& bound,
                                const typename Ops::Var& Q, const typename Ops::Var& Qd) {
  using Var = typename Ops::Var;
  const LnnModel& model = *bound.model;
  const Index n = model.dof();
  const Index batch = ops.cols(Q);
  require_dim(ops.rows(Q), n, "q");
  require_dim(ops.rows(Qd), n, "qdot");

  std::vector<Var> directions;
  for (Index k = 0; k < n; ++k) directions.push_back(ops.constant(diffnet::unit_direction(n, k, batch)));

  // Packed lower factor with a strictly positive diagonal.
  auto chol = diffnet::apply_mlp(ops, bound.chol, Q, directions);
  const bool full = ops.rows(chol.value) > n;
  auto positive_diagonal = [&](const Var& raw, const std::vector<Var>& raw_tangents) {
    Var diag_raw = ops.slice_rows(raw, 0, n);
    Var diag = ops.softplus(diag_raw, kSoftplusOffset);
    Var slope = ops.sigmoid(diag_raw, kSoftplusOffset);
    std::vector<Var> tangents;
    for (const auto& t : raw_tangents) {
      Var dd = ops.cwise_mul(slope, ops.slice_rows(t, 0, n));
      tangents.push_back(full ? ops.vstack({dd, ops.slice_rows(t, n, ops.rows(t) - n)}) : dd);
    }
    Var L = full ? ops.vstack({diag, ops.slice_rows(raw, n, ops.rows(raw) - n)}) : diag;
    return std::make_pair(L, tangents);
  };
  auto [L, dL] = positive_diagonal(chol.value, chol.tangents);

  Matrix eps_identity = model.eps() * Matrix::Identity(n, n);
  const Vector eps_flat = Eigen::Map<const Vector>(eps_identity.data(), n * n);
  Var M = ops.add_col_const(ops.scale(ops.sym_lower_product(L, L, n), 0.5), eps_flat);

  // Ldot = sum_k qdot_k dL/dq_k gives Mdot = L Ldot^T + Ldot L^T.
  Var Ldot = ops.mul_rowwise(dL[0], ops.slice_rows(Qd, 0, 1));
  for (Index k = 1; k < n; ++k) Ldot = ops.add(Ldot, ops.mul_rowwise(dL[k], ops.slice_rows(Qd, k, 1)));
  Var Mdot_qd = ops.batched_matvec(ops.sym_lower_product(L, Ldot, n), Qd, n);

  std::vector<Var> quad;
  for (Index k = 0; k < n; ++k) {
    Var dMk = ops.sym_lower_product(L, dL[k], n);
    quad.push_back(ops.sum_rows(ops.cwise_mul(Qd, ops.batched_matvec(dMk, Qd, n))));
  }
  Var Cqdot = ops.sub(Mdot_qd, ops.scale(ops.vstack(quad), 0.5));

  auto pot = diffnet::apply_mlp(ops, bound.pot, Q, directions);
  Var G = ops.vstack(pot.tangents);

  Var H = model.use_external ? diffnet::apply_mlp(ops, bound.ext, ops.vstack({Q, Qd})).value
                             : ops.constant(Matrix::Zero(n, batch));
  return {M, Cqdot, G, H, pot.value};
}

inline TermsBatch LnnModel::terms_batch(const Matrix& Q, const Matrix& Qd) const {
  diffnet::EigenOps ops;
  auto bound = bind_lnn(ops, *this);
  auto t = lagrangian_terms(ops, bound, Q, Qd);
  return {std::move(t.M), std::move(t.Cqdot), std::move(t.G), std::move(t.H), std::move(t.V)};
}

// ---- backend-generic dynamics maps ----

template <class Ops>
typename Ops::Var forward_dynamics_vars(const Ops& ops, const TermsVars<Ops>& t, const Matrix& B,
                                        const typename Ops::Var& U) {
  const Index n = B.rows();
  auto rhs = ops.sub(ops.add(ops.matmul_const(B, U), t.H), ops.add(t.Cqdot, t.G));
  return ops.batched_spd_solve(t.M, rhs, n);
}

template <class Ops>
typename Ops::Var inverse_dynamics_vars(const Ops& ops, const TermsVars<Ops>& t,
                                        const typename Ops::Var& Qdd) {
  const Index n = ops.rows(Qdd);
  return ops.sub(ops.add(ops.batched_matvec(t.M, Qdd, n), ops.add(t.Cqdot, t.G)), t.H);
}

// The discrete update q' = q + qdot dt + qddot dt^2, qdot' = qdot + qddot dt.
// With half_step the position term uses 0.5 qddot dt^2.
template <class Ops>
std::pair<typename Ops::Var, typename Ops::Var> euler_update(const Ops& ops, const typename Ops::Var& Q,
                                                             const typename Ops::Var& Qd,
                                                             const typename Ops::Var& Qdd, double dt,
                                                             bool half_step) {
  const double c = half_step ? 0.5 * dt * dt : dt * dt;
  auto q_next = ops.add(ops.add(Q, ops.scale(Qd, dt)), ops.scale(Qdd, c));
  auto qd_next = ops.add(Qd, ops.scale(Qdd, dt));
  return {q_next, qd_next};
}

// ---- batched API on any LagrangianModel ----

inline Matrix mass_matrix_at(const TermsBatch& t, Index column, Index n) {
  return Eigen::Map<const Matrix>(t.M.col(column).data(), n, n);
}

template <LagrangianModel Model>
Matrix forward_dynamics_batch(const Model& model, const Matrix& Q, const Matrix& Qd, const Matrix& U) {
  require_dim(U.rows(), model.actuated(), "u");
  const TermsBatch t = model.terms_batch(Q, Qd);
  const Index n = model.dof();
  Matrix rhs = model.actuation() * U + t.H - t.Cqdot - t.G;
  Matrix qdd(n, Q.cols());
  for (Index c = 0; c < Q.cols(); ++c) {
    Eigen::LLT<Matrix> llt(mass_matrix_at(t, c, n));
    require(llt.info() == Eigen::Success, ErrorKind::kInvalidArg, "mass matrix factorization failed");
    qdd.col(c) = llt.solve(rhs.col(c));
  }
  return qdd;
}

template <LagrangianModel Model>
Matrix inverse_dynamics_batch(const Model& model, const Matrix& Q, const Matrix& Qd, const Matrix& Qdd) {
  const TermsBatch t = model.terms_batch(Q, Qd);
  const Index n = model.dof();
  Matrix tau(n, Q.cols());
  for (Index c = 0; c < Q.cols(); ++c) {
    tau.col(c) = mass_matrix_at(t, c, n) * Qdd.col(c) + t.Cqdot.col(c) + t.G.col(c) - t.H.col(c);
  }
  return tau;
}

template <LagrangianModel Model>
std::pair<Matrix, Matrix> step_batch(const Model& model, const Matrix& Q, const Matrix& Qd, const Matrix& U) {
  const Matrix qdd = forward_dynamics_batch(model, Q, Qd, U);
  diffnet::EigenOps ops;
  return euler_update(ops, Q, Qd, qdd, model.dt(), model.half_step());
}

// ---- single-state API ----

template <LagrangianModel Model>
Matrix mass_matrix(const Model& model, const Eigen::Ref<const Vector>& q) {
  require_dim(q.size(), model.dof(), "q");
  const TermsBatch t = model.terms_batch(q, Vector::Zero(q.size()));
  return mass_matrix_at(t, 0, model.dof());
}

template <LagrangianModel Model>
LagrangianTerms lagrangian_terms(const Model& model, const Eigen::Ref<const Vector>& q,
                                 const Eigen::Ref<const Vector>& qdot) {
  require_dim(q.size(), model.dof(), "q");
  require_dim(qdot.size(), model.dof(), "qdot");
  const TermsBatch t = model.terms_batch(q, qdot);
  return {mass_matrix_at(t, 0, model.dof()), t.Cqdot.col(0), t.G.col(0), t.H.col(0), t.V(0, 0)};
}

template <LagrangianModel Model>
Vector forward_dynamics(const Model& model, const Eigen::Ref<const Vector>& q,
                        const Eigen::Ref<const Vector>& qdot, const Eigen::Ref<const Vector>& u) {
  require_dim(q.size(), model.dof(), "q");
  require_dim(qdot.size(), model.dof(), "qdot");
  require_dim(u.size(), model.actuated(), "u");
  return forward_dynamics_batch(model, q, qdot, u).col(0);
}

/// Required generalized forces M qddot + Cqdot + G - H (before projection
/// onto the actuated DoFs). No linear solve.
template <LagrangianModel Model>
Vector inverse_dynamics(const Model& model, const Eigen::Ref<const Vector>& q,
                        const Eigen::Ref<const Vector>& qdot, const Eigen::Ref<const Vector>& qddot) {
  require_dim(q.size(), model.dof(), "q");
  require_dim(qdot.size(), model.dof(), "qdot");
  require_dim(qddot.size(), model.dof(), "qddot");
  return inverse_dynamics_batch(model, q, qdot, qddot).col(0);
}

template <LagrangianModel Model>
GeneralizedState step(const Model& model, const GeneralizedState& state, const Eigen::Ref<const Vector>& u) {
  auto [q, qd] = step_batch(model, state.q, state.qdot, u);
  return {q.col(0), qd.col(0)};
}

/// Rows of a selection-type actuation matrix split into actuated DoFs (in
/// column order of B) and the remaining unactuated DoFs.
struct ActuationSplit {
  std::vector<Index> actuated_rows;
  std::vector<Index> unactuated_rows;
};

inline ActuationSplit actuation_split(const Matrix& B) {
  ActuationSplit s;
  std::vector<bool> used(B.rows(), false);
  for (Index j = 0; j < B.cols(); ++j) {
    Index row = -1;
    for (Index i = 0; i < B.rows(); ++i) {
      if (B(i, j) != 0.0) {
        require(B(i, j) == 1.0 && row < 0, ErrorKind::kInvalidArg,
                "split_actuation expects a 0/1 selection matrix");
        row = i;
      }
    }
    require(row >= 0 && !used[row], ErrorKind::kInvalidArg, "split_actuation expects a selection matrix");
    used[row] = true;
    s.actuated_rows.push_back(row);
  }
  for (Index i = 0; i < B.rows(); ++i)
    if (!used[i]) s.unactuated_rows.push_back(i);
  return s;
}

struct SplitForces {
  Vector u;
  Vector root_residual;
};

inline SplitForces split_actuation(const Matrix& B, const Eigen::Ref<const Vector>& tau_req) {
  require_dim(tau_req.size(), B.rows(), "tau_req");
  const ActuationSplit s = actuation_split(B);
  SplitForces out{Vector(s.actuated_rows.size()), Vector(s.unactuated_rows.size())};
  for (std::size_t i = 0; i < s.actuated_rows.size(); ++i) out.u[i] = tau_req[s.actuated_rows[i]];
  for (std::size_t i = 0; i < s.unactuated_rows.size(); ++i) out.root_residual[i] = tau_req[s.unactuated_rows[i]];
  return out;
}

template <LagrangianModel Model>
SplitForces split_actuation(const Model& model, const Eigen::Ref<const Vector>& tau_req) {
  return split_actuation(model.actuation(), tau_req);
}

}  // namespace lagmpc::lnn
