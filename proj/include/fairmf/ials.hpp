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
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "fairmf/factor_model.hpp"
#include "fairmf/parallel.hpp"
#include "fairmf/types.hpp"

namespace fairmf {

namespace detail {

// Solves A x = b for SPD A given by its lower triangle. On a failed
// factorization, bumps the diagonal by 1e-10 * trace / d once and retries.
inline Vector spd_solve(Matrix& a, const Vector& b) {
  Eigen::LLT<Matrix, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += 1e-10 * a.trace() / static_cast<Real>(a.rows());
    llt.compute(a);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("Cholesky failed even after diagonal bump");
    }
  }
  return llt.solve(b);
}

// One ridge sweep shared by every closed-form side update. For each row r of
// the side being solved, with F the opposite side's factors and list(r) the
// incident opposite rows:
//   A_r = sum_{x in list(r)} f_x f_x^T + alpha0 * G_F + base + lambda[r] * I
//   b_r = sum_{x in list(r)} f_x
//   out_r = A_r^{-1} b_r
// base is the rank-one fairness term lambda_f * s s^T (zero for plain iALS).
// Rows with an empty list are exactly zero.
inline FactorMatrix solve_side(const std::vector<std::int64_t>& ptr,
                               const std::vector<std::int32_t>& ids,
                               int n_rows, const FactorMatrix& f,
                               const Matrix& g_f, const Vector& lambda,
                               Real alpha0, const Matrix& base,
                               const ExecPolicy& ex) {
  const int d = static_cast<int>(f.cols());
  FactorMatrix out = FactorMatrix::Zero(n_rows, d);
  Matrix shared = alpha0 * g_f + base;
  const int threads = ex.deterministic ? 1 : ex.resolved_threads();
#ifdef _OPENMP
#pragma omp parallel num_threads(threads)
#endif
  {
    Matrix a(d, d);
    Vector b(d);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int r = 0; r < n_rows; ++r) {
      const std::int64_t begin = ptr[r], end = ptr[r + 1];
      if (begin == end) continue;
      a = shared;
      a.diagonal().array() += lambda[r];
      b.setZero();
      for (std::int64_t p = begin; p < end; ++p) {
        const auto row = f.row(ids[static_cast<std::size_t>(p)]);
        a.template selfadjointView<Eigen::Lower>().rankUpdate(row.transpose());
        b += row.transpose();
      }
      out.row(r) = spd_solve(a, b).transpose();
    }
  }
  (void)threads;
  return out;
}

}  // namespace detail

// The implicit-feedback objective:
//   1/2 sum_{(i,j) observed} (1 - u_i . v_j)^2            data term
//   + alpha0/2 * tr(G_U G_V)                              implicit zeros
//   + 1/2 sum_i lambda_u[i] |u_i|^2 + 1/2 sum_j lambda_v[j] |v_j|^2
// The implicit term uses the Gramian identity |U V^T|_F^2 = tr(G_U G_V), so
// the whole evaluation is O(nnz d + (|U|+|V|) d^2).
inline Real ials_loss(const SparseBinaryMatrix& m, const FactorMatrix& u,
                      const FactorMatrix& v, const RegWeights& w, Real alpha0,
                      const ExecPolicy& ex = {}) {
  if (u.rows() != m.n_users || v.rows() != m.n_items || u.cols() != v.cols()) {
    throw std::invalid_argument("ials_loss: dimension mismatch");
  }
  const Real data = chunked_reduce<Real>(
      m.n_users, ex, 0.0,
      [&](std::int64_t begin, std::int64_t end) {
        Real acc = 0.0;
        for (std::int64_t i = begin; i < end; ++i) {
          for (const std::int32_t j : m.row(static_cast<int>(i))) {
            const Real e = 1.0 - u.row(i).dot(v.row(j));
            acc += e * e;
          }
        }
        return acc;
      },
      [](Real a, Real b) { return a + b; });
  const Matrix g_u = gramian(u, ex);
  const Matrix g_v = gramian(v, ex);
  const Real implicit = g_u.cwiseProduct(g_v).sum();
  const Real reg_u = chunked_reduce<Real>(
      m.n_users, ex, 0.0,
      [&](std::int64_t begin, std::int64_t end) {
        Real acc = 0.0;
        for (std::int64_t i = begin; i < end; ++i) {
          acc += w.lambda_u[i] * u.row(i).squaredNorm();
        }
        return acc;
      },
      [](Real a, Real b) { return a + b; });
  const Real reg_v = chunked_reduce<Real>(
      m.n_items, ex, 0.0,
      [&](std::int64_t begin, std::int64_t end) {
        Real acc = 0.0;
        for (std::int64_t j = begin; j < end; ++j) {
          acc += w.lambda_v[j] * v.row(j).squaredNorm();
        }
        return acc;
      },
      [](Real a, Real b) { return a + b; });
  return 0.5 * (data + alpha0 * implicit + reg_u + reg_v);
}

// Exact closed-form user step: each u_i solves its ridge system against the
// current item factors.
inline FactorMatrix update_users_ials(const SparseBinaryMatrix& m,
                                      const FactorMatrix& v,
                                      const RegWeights& w, Real alpha0,
                                      const ExecPolicy& ex = {}) {
  if (v.rows() != m.n_items) {
    throw std::invalid_argument("update_users_ials: item count mismatch");
  }
  const Matrix g_v = gramian(v, ex);
  const Matrix base = Matrix::Zero(v.cols(), v.cols());
  return detail::solve_side(m.row_ptr, m.row_items, m.n_users, v, g_v,
                            w.lambda_u, alpha0, base, ex);
}

// Exact closed-form item step, symmetric to the user step.
inline FactorMatrix update_items_ials(const SparseBinaryMatrix& m,
                                      const FactorMatrix& u,
                                      const RegWeights& w, Real alpha0,
                                      const ExecPolicy& ex = {}) {
  if (u.rows() != m.n_users) {
    throw std::invalid_argument("update_items_ials: user count mismatch");
  }
  const Matrix g_u = gramian(u, ex);
  const Matrix base = Matrix::Zero(u.cols(), u.cols());
  return detail::solve_side(m.col_ptr, m.col_users, m.n_items, u, g_u,
                            w.lambda_v, alpha0, base, ex);
}

struct IalsResult {
  FactorMatrix u;
  FactorMatrix v;
  // loss[0] is the initial objective, loss[e] the value after epoch e.
  std::vector<Real> loss;
};

// Alternating exact minimization, users before items each epoch. The loss
// trace is non-increasing because every half-step is an exact block solve.
inline IalsResult train_ials(const SparseBinaryMatrix& m,
                             const HyperParams& hp, const ExecPolicy& ex = {}) {
  hp.validate();
  const RegWeights w = frequency_weights(m, hp.lambda2, hp.eta, hp.alpha0);
  IalsResult r;
  r.u = init_factors(m.n_users, hp.d, hp.sigma, derive_seed(hp.seed, 1));
  r.v = init_factors(m.n_items, hp.d, hp.sigma, derive_seed(hp.seed, 2));
  r.loss.reserve(static_cast<std::size_t>(hp.t_train) + 1);
  r.loss.push_back(ials_loss(m, r.u, r.v, w, hp.alpha0, ex));
  for (int e = 1; e <= hp.t_train; ++e) {
    r.u = update_users_ials(m, r.v, w, hp.alpha0, ex);
    r.v = update_items_ials(m, r.u, w, hp.alpha0, ex);
    if (!r.u.allFinite()) throw DivergenceError(e, "u");
    if (!r.v.allFinite()) throw DivergenceError(e, "v");
    r.loss.push_back(ials_loss(m, r.u, r.v, w, hp.alpha0, ex));
  }
  return r;
}

}  // namespace fairmf
