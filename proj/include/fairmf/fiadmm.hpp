// Copyright 2026 The fairmf Authors
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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fairmf/factor_model.hpp"
#include "fairmf/ials.hpp"
#include "fairmf/parallel.hpp"
#include "fairmf/types.hpp"

// Fairness-regularized factorization via three-block ADMM. The augmented
// objective couples the mean user vector t = (1/|U|) U^T 1 to a consensus
// variable s with scaled dual w:
//   L_rho = L_ials + lambda_f/2 |V s|^2 + rho/2 |t - s + w|^2 - rho/2 |w|^2
// Items solve in closed form, users take one linearized proximal gradient
// step per epoch, then s solves exactly and w ascends.

namespace fairmf {

// Full solver state. The cached Gramians are only trusted while their
// freshness flag holds: g_u for the current u, g_v for the current v.
struct AdmmState {
  FactorMatrix u;
  FactorMatrix v;
  Vector s;
  Vector w;
  Matrix g_u;
  Matrix g_v;
  bool g_u_fresh = false;
  bool g_v_fresh = false;
  int epoch = 0;
};

// One recorded epoch. violation and dw are the same floating-point value by
// construction: the dual step is w += (t - s), so its norm is the constraint
// violation.
struct EpochRow {
  int epoch = 0;
  Real l_rho = 0;      // augmented objective after the epoch
  Real dv = 0;         // |V^k+1 - V^k|_F
  Real du = 0;         // |U^k+1 - U^k|_F
  Real ds = 0;         // |s^k+1 - s^k|_2
  Real dw = 0;         // |w^k+1 - w^k|_2
  Real violation = 0;  // |t^k+1 - s^k+1|_2
  Real loss = 0;       // plain implicit-feedback objective
  Real r_f = 0;        // fairness regularizer 1/2 |V t|^2
};

using EpochTrace = std::vector<EpochRow>;

struct AdmmOptions {
  ExecPolicy exec;
  // Called after the initial state (epoch 0) and after every epoch.
  std::function<void(const AdmmState&, const EpochRow&)> on_epoch;
};

struct AdmmResult {
  AdmmState state;
  EpochTrace trace;
};

// 1/2 |V t|^2 with t the mean user vector: the exposure-skew penalty.
inline Real fairness_regulariser(const FactorMatrix& u, const FactorMatrix& v,
                                 const ExecPolicy& ex = {}) {
  if (u.cols() != v.cols()) {
    throw std::invalid_argument("fairness_regulariser: dimension mismatch");
  }
  const Vector t = mean_user_vector(u, ex);
  return 0.5 * (v * t).squaredNorm();
}

namespace detail {

// The ADMM-specific terms on top of the plain objective, with t supplied so
// callers evaluating the end-of-epoch state reuse the exact t they updated
// with.
inline Real admm_penalty(const FactorMatrix& v, const Vector& t,
                         const Vector& s, const Vector& w_dual, Real lambda_f,
                         Real rho) {
  const Real fair = lambda_f == 0 ? 0.0 : 0.5 * lambda_f * (v * s).squaredNorm();
  return fair + 0.5 * rho * (t - s + w_dual).squaredNorm() -
         0.5 * rho * w_dual.squaredNorm();
}

}  // namespace detail

// L_rho at an arbitrary combination of blocks.
inline Real augmented_lagrangian(const SparseBinaryMatrix& m,
                                 const FactorMatrix& u, const FactorMatrix& v,
                                 const Vector& s, const Vector& w_dual,
                                 const RegWeights& w, const HyperParams& hp,
                                 const ExecPolicy& ex = {}) {
  return ials_loss(m, u, v, w, hp.alpha0, ex) +
         detail::admm_penalty(v, mean_user_vector(u, ex), s, w_dual,
                              hp.lambda_f, hp.rho);
}

inline Real augmented_lagrangian(const SparseBinaryMatrix& m,
                                 const AdmmState& st, const RegWeights& w,
                                 const HyperParams& hp,
                                 const ExecPolicy& ex = {}) {
  return augmented_lagrangian(m, st.u, st.v, st.s, st.w, w, hp, ex);
}

// Closed-form item step. Identical to the iALS item solve except for the
// rank-one fairness term lambda_f s s^T in every normal matrix. Requires a
// fresh user Gramian.
inline FactorMatrix update_v(const SparseBinaryMatrix& m, const AdmmState& st,
                             const RegWeights& w, const HyperParams& hp,
                             const ExecPolicy& ex = {}) {
  if (!st.g_u_fresh) throw std::logic_error("update_v: stale user Gramian");
  const Matrix base = hp.lambda_f * (st.s * st.s.transpose());
  return detail::solve_side(m.col_ptr, m.col_users, m.n_items, st.u, st.g_u,
                            w.lambda_v, hp.alpha0, base, ex);
}

// Row i of the U-gradient of the smooth part:
//   (sum_{j in row(i)} v_j v_j^T + alpha0 G_V + lambda_u[i] I) u_i
//     - sum_{j in row(i)} v_j
// evaluated as matrix-free products, O(deg_i d + d^2) per row. Requires a
// fresh item Gramian.
inline FactorMatrix grad_u(const SparseBinaryMatrix& m, const AdmmState& st,
                           const RegWeights& w, const HyperParams& hp,
                           const ExecPolicy& ex = {}) {
  if (!st.g_v_fresh) throw std::logic_error("grad_u: stale item Gramian");
  FactorMatrix g(m.n_users, st.u.cols());
  parallel_for(m.n_users, ex, [&](std::int64_t i) {
    const auto ui = st.u.row(i);
    Vector x = hp.alpha0 * (st.g_v * ui.transpose()) +
               w.lambda_u[i] * ui.transpose();
    for (const std::int32_t j : m.row(static_cast<int>(i))) {
      const auto vj = st.v.row(j);
      x += vj.transpose() * (vj.dot(ui) - 1.0);
    }
    g.row(i) = x.transpose();
  });
  return g;
}

// Proximal map of the consensus penalty around the gradient point:
//   prox(Ut) = ((rho/|U|^2) 1 1^T + (1/gamma) I)^{-1}
//              ((1/gamma) Ut + (rho/|U|) 1 (s - w)^T)
// computed by Sherman-Morrison in three phases: shift every row by
// (rho gamma/|U|) (s - w), reduce the column sums, then subtract
// c = rho / (|U|^2 (rho/|U| + 1/gamma)) times the sum from every row.
// Cost is O(|U| d) and rho = 0 collapses to the identity.
inline FactorMatrix prox_map(const FactorMatrix& u_tilde, const Vector& s,
                             const Vector& w_dual, Real rho, Real gamma,
                             const ExecPolicy& ex = {}) {
  if (rho < 0 || !(gamma >= 0)) {
    throw std::invalid_argument("prox_map: rho and gamma must be >= 0");
  }
  if (rho == 0 || u_tilde.rows() == 0) return u_tilde;
  const Real n = static_cast<Real>(u_tilde.rows());
  const Vector shift = (rho * gamma / n) * (s - w_dual);
  FactorMatrix out = u_tilde;
  parallel_for(out.rows(), ex, [&](std::int64_t i) {
    out.row(i) += shift.transpose();
  });
  const Vector zero = Vector::Zero(out.cols());
  const Vector colsum = chunked_reduce<Vector>(
      out.rows(), ex, zero,
      [&](std::int64_t begin, std::int64_t end) -> Vector {
        return out.middleRows(begin, end - begin).colwise().sum().transpose();
      },
      [](Vector acc, const Vector& p) -> Vector { return acc + p; });
  const Real c = rho / (n * n * (rho / n + 1.0 / gamma));
  parallel_for(out.rows(), ex, [&](std::int64_t i) {
    out.row(i) -= c * colsum.transpose();
  });
  return out;
}

// Linearized proximal user step: a gamma gradient step on the smooth part,
// then the consensus prox at (s, w).
inline FactorMatrix update_u(const SparseBinaryMatrix& m, const AdmmState& st,
                             const RegWeights& w, const HyperParams& hp,
                             const ExecPolicy& ex = {}) {
  FactorMatrix u_tilde = st.u - hp.gamma * grad_u(m, st, w, hp, ex);
  return prox_map(u_tilde, st.s, st.w, hp.rho, hp.gamma, ex);
}

// Exact s-step: s = rho (lambda_f G_V + rho I)^{-1} (t + w). lambda_f = 0
// collapses the inverse, giving s = t + w identically. Requires a fresh item
// Gramian.
inline Vector update_s(const AdmmState& st, const HyperParams& hp,
                       const ExecPolicy& ex = {}) {
  const Vector t = mean_user_vector(st.u, ex);
  if (hp.lambda_f == 0) return t + st.w;
  if (!st.g_v_fresh) throw std::logic_error("update_s: stale item Gramian");
  if (hp.rho == 0) return Vector::Zero(t.size());
  Matrix a = hp.lambda_f * st.g_v;
  a.diagonal().array() += hp.rho;
  const Vector rhs = t + st.w;
  return hp.rho * detail::spd_solve(a, rhs);
}

// Scaled dual ascent: w + t - s. Expects st.s to already hold this epoch's
// consensus vector.
inline Vector update_w(const AdmmState& st, const ExecPolicy& ex = {}) {
  return st.w + mean_user_vector(st.u, ex) - st.s;
}

namespace detail {

inline void check_finite(const AdmmState& st, int epoch) {
  if (!st.u.allFinite()) throw DivergenceError(epoch, "u");
  if (!st.v.allFinite()) throw DivergenceError(epoch, "v");
  if (!st.s.allFinite()) throw DivergenceError(epoch, "s");
  if (!st.w.allFinite()) throw DivergenceError(epoch, "w");
}

inline EpochRow record_epoch(const SparseBinaryMatrix& m, const AdmmState& st,
                             const Vector& t, const RegWeights& w,
                             const HyperParams& hp, int epoch, Real dv,
                             Real du, Real ds, Real dw_and_violation,
                             const ExecPolicy& ex) {
  EpochRow row;
  row.epoch = epoch;
  row.loss = ials_loss(m, st.u, st.v, w, hp.alpha0, ex);
  row.l_rho = row.loss + admm_penalty(st.v, t, st.s, st.w, hp.lambda_f, hp.rho);
  row.dv = dv;
  row.du = du;
  row.ds = ds;
  row.dw = dw_and_violation;
  row.violation = dw_and_violation;
  row.r_f = 0.5 * (st.v * t).squaredNorm();
  return row;
}

}  // namespace detail

// Full training loop. Per epoch: refresh G_U, solve V, refresh G_V, one
// proximal gradient step on U, exact s, dual ascent on w, in that order.
// Gramian freshness: G_U from the top of the epoch serves the V-step; G_V
// from after the V-step serves the U-gradient and the s-step.
inline AdmmResult train_fiadmm(const SparseBinaryMatrix& m,
                               const HyperParams& hp,
                               const AdmmOptions& opts = {}) {
  hp.validate();
  const ExecPolicy& ex = opts.exec;
  const RegWeights w = frequency_weights(m, hp.lambda2, hp.eta, hp.alpha0);
  if (m.n_users == 0) {
    throw std::invalid_argument("train_fiadmm: matrix has no users");
  }

  AdmmResult r;
  AdmmState& st = r.state;
  st.u = init_factors(m.n_users, hp.d, hp.sigma, derive_seed(hp.seed, 1));
  st.v = init_factors(m.n_items, hp.d, hp.sigma, derive_seed(hp.seed, 2));
  st.s = mean_user_vector(st.u, ex);
  st.w = Vector::Zero(hp.d);
  st.epoch = 0;
  detail::check_finite(st, 0);
  {
    const Vector t0 = mean_user_vector(st.u, ex);
    const EpochRow row0 = detail::record_epoch(m, st, t0, w, hp, 0, 0, 0, 0,
                                               (t0 - st.s).norm(), ex);
    r.trace.push_back(row0);
    if (opts.on_epoch) opts.on_epoch(st, row0);
  }

  for (int e = 1; e <= hp.t_train; ++e) {
    const FactorMatrix prev_u = st.u;
    const FactorMatrix prev_v = st.v;
    const Vector prev_s = st.s;

    st.g_u = gramian(st.u, ex);
    st.g_u_fresh = true;
    st.v = update_v(m, st, w, hp, ex);
    st.g_v = gramian(st.v, ex);
    st.g_v_fresh = true;
    st.u = update_u(m, st, w, hp, ex);
    st.g_u_fresh = false;

    const Vector t = mean_user_vector(st.u, ex);
    Vector s_next;
    if (hp.lambda_f == 0) {
      s_next = t + st.w;
    } else {
      Matrix a = hp.lambda_f * st.g_v;
      a.diagonal().array() += hp.rho;
      const Vector rhs = t + st.w;
      s_next = hp.rho * detail::spd_solve(a, rhs);
    }
    const Vector delta = t - s_next;
    const Real violation = delta.norm();
    st.s = s_next;
    st.w += delta;
    st.epoch = e;
    detail::check_finite(st, e);

    const EpochRow row = detail::record_epoch(
        m, st, t, w, hp, e, (st.v - prev_v).norm(), (st.u - prev_u).norm(),
        (st.s - prev_s).norm(), violation, ex);
    r.trace.push_back(row);
    if (opts.on_epoch) opts.on_epoch(st, row);
  }
  return r;
}

struct FoldInResult {
  FactorMatrix u;
  Vector s;
  Vector w;
  EpochTrace trace;
};

// Fold-in for unseen users: item factors and their Gramian stay frozen, and
// each epoch runs only the U, s, w updates on the fold-in interactions.
inline FoldInResult fold_in(const FactorMatrix& v,
                            const SparseBinaryMatrix& m_holdout,
                            const HyperParams& hp,
                            const AdmmOptions& opts = {}) {
  hp.validate();
  if (v.rows() != m_holdout.n_items) {
    throw std::invalid_argument("fold_in: item count mismatch");
  }
  if (v.cols() != hp.d) {
    throw std::invalid_argument("fold_in: factor dimension mismatch");
  }
  if (m_holdout.n_users == 0) {
    throw std::invalid_argument("fold_in: matrix has no users");
  }
  const ExecPolicy& ex = opts.exec;
  const RegWeights w = frequency_weights(m_holdout, hp.lambda2, hp.eta,
                                         hp.alpha0);

  AdmmState st;
  st.v = v;
  st.g_v = gramian(v, ex);
  st.g_v_fresh = true;
  st.u = init_factors(m_holdout.n_users, hp.d, hp.sigma,
                      derive_seed(hp.seed, 3));
  st.s = mean_user_vector(st.u, ex);
  st.w = Vector::Zero(hp.d);
  st.epoch = 0;
  detail::check_finite(st, 0);

  FoldInResult r;
  {
    const Vector t0 = mean_user_vector(st.u, ex);
    const EpochRow row0 = detail::record_epoch(m_holdout, st, t0, w, hp, 0, 0,
                                               0, 0, (t0 - st.s).norm(), ex);
    r.trace.push_back(row0);
    if (opts.on_epoch) opts.on_epoch(st, row0);
  }
  for (int e = 1; e <= hp.t_fold; ++e) {
    const FactorMatrix prev_u = st.u;
    const Vector prev_s = st.s;
    st.u = update_u(m_holdout, st, w, hp, ex);
    const Vector t = mean_user_vector(st.u, ex);
    Vector s_next;
    if (hp.lambda_f == 0) {
      s_next = t + st.w;
    } else {
      Matrix a = hp.lambda_f * st.g_v;
      a.diagonal().array() += hp.rho;
      const Vector rhs = t + st.w;
      s_next = hp.rho * detail::spd_solve(a, rhs);
    }
    const Vector delta = t - s_next;
    const Real violation = delta.norm();
    st.s = s_next;
    st.w += delta;
    st.epoch = e;
    detail::check_finite(st, e);
    const EpochRow row = detail::record_epoch(m_holdout, st, t, w, hp, e, 0.0,
                                              (st.u - prev_u).norm(),
                                              (st.s - prev_s).norm(),
                                              violation, ex);
    r.trace.push_back(row);
    if (opts.on_epoch) opts.on_epoch(st, row);
  }
  r.u = std::move(st.u);
  r.s = std::move(st.s);
  r.w = std::move(st.w);
  return r;
}

}  // namespace fairmf
