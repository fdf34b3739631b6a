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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fairmf/fiadmm.hpp"
#include "fairmf/rng.hpp"
#include "fairmf/types.hpp"

// Numerical checks of the solver's convergence theory: the step-size and
// penalty bounds, the per-epoch descent inequalities, the smoothness
// constants, and finite-difference gradient validation. Everything here is
// measured on actual runs; nothing is assumed.

namespace fairmf {

// Light copy of the solver variables at one recorded epoch.
struct AdmmSnapshot {
  FactorMatrix u;
  FactorMatrix v;
  Vector s;
  Vector w;
  int epoch = 0;

  static AdmmSnapshot from(const AdmmState& st) {
    return {st.u, st.v, st.s, st.w, st.epoch};
  }
};

// Trajectory constants (running maxima) and the derived admissible-parameter
// bounds: the penalty must satisfy rho >= rho_bound and the user step size
// gamma <= gamma_bound.
struct TheoremConstants {
  Real c_u = 0;  // max over epochs of |U|_F^2
  Real c_v = 0;  // max of |V|_F^2
  Real c_s = 0;  // max of |s|_2^2
  Real lambda_u_max = 0;
  Real lambda_v_min = 0;
  Real rho_bound = 0;
  Real gamma_bound = 0;
  bool rho_ok = false;
  bool gamma_ok = false;
};

inline TheoremConstants theorem_conditions(
    std::span<const AdmmSnapshot> history, const RegWeights& w,
    const HyperParams& hp) {
  if (history.empty()) {
    throw std::invalid_argument("theorem_conditions: empty history");
  }
  TheoremConstants c;
  for (const auto& st : history) {
    c.c_u = std::max(c.c_u, st.u.squaredNorm());
    c.c_v = std::max(c.c_v, st.v.squaredNorm());
    c.c_s = std::max(c.c_s, st.s.squaredNorm());
  }
  c.lambda_u_max = w.lambda_u.maxCoeff();
  c.lambda_v_min = w.lambda_v.minCoeff();
  const Real lf2 = hp.lambda_f * hp.lambda_f;
  c.rho_bound = std::max(24.0 * lf2 * c.c_v * c.c_s / c.lambda_v_min,
                         0.5 + std::sqrt(0.25 + 6.0 * lf2 * c.c_v * c.c_v));
  const Real n_items = static_cast<Real>(w.lambda_v.size());
  c.gamma_bound = 1.0 / (std::sqrt(n_items) *
                             ((1.0 + hp.alpha0) * c.c_v + c.lambda_u_max) +
                         1.0);
  c.rho_ok = hp.rho >= c.rho_bound;
  c.gamma_ok = hp.gamma <= c.gamma_bound;
  return c;
}

// One checked inequality: ok when lhs <= rhs + slack, margin = rhs - lhs.
struct LemmaCheck {
  std::string name;
  Real lhs = 0;
  Real rhs = 0;
  Real margin = 0;
  bool ok = false;
};

struct LemmaReport {
  std::vector<LemmaCheck> checks;

  int violations() const {
    int n = 0;
    for (const auto& c : checks) n += c.ok ? 0 : 1;
    return n;
  }
};

// Evaluates the per-epoch descent chain between two consecutive recorded
// states a (epoch k) and b (epoch k+1), with constants measured from the
// pair itself:
//   primal V,U:  L(V',U',s,w) - L(V,U,s,w)
//                  <= (sqrt(|U|)((1+a0)C_V + max lambda_u) - 1/gamma)/2 |dU|^2
//                     - (min lambda_v / 2) |dV|^2
//   consensus s: L(V',U',s',w) - L(V',U',s,w) <= -(rho/2) |ds|^2
//   dual w:      L(V',U',s',w') - L(V',U',s',w)
//                  <= (3 lf^2 C_V^2 / rho) |ds|^2 + (6 lf^2 C_V C_s / rho) |dV|^2
//                and equals rho |dw|^2 identically
//   lower bound: L(state) >= ((rho - lf C_V)/2) |t - s|^2 at both states.
inline LemmaReport check_descent_lemmas(const SparseBinaryMatrix& m,
                                        const AdmmSnapshot& a,
                                        const AdmmSnapshot& b,
                                        const RegWeights& w,
                                        const HyperParams& hp,
                                        Real slack = 1e-8,
                                        const ExecPolicy& ex = {}) {
  const Real c_v = std::max(a.v.squaredNorm(), b.v.squaredNorm());
  const Real c_s = std::max(a.s.squaredNorm(), b.s.squaredNorm());
  const Real du2 = (b.u - a.u).squaredNorm();
  const Real dv2 = (b.v - a.v).squaredNorm();
  const Real ds2 = (b.s - a.s).squaredNorm();
  const Real dw2 = (b.w - a.w).squaredNorm();
  const Real n_users = static_cast<Real>(a.u.rows());

  const Real l_kk = augmented_lagrangian(m, a.u, a.v, a.s, a.w, w, hp, ex);
  const Real l_vu = augmented_lagrangian(m, b.u, b.v, a.s, a.w, w, hp, ex);
  const Real l_s = augmented_lagrangian(m, b.u, b.v, b.s, a.w, w, hp, ex);
  const Real l_w = augmented_lagrangian(m, b.u, b.v, b.s, b.w, w, hp, ex);

  LemmaReport report;
  auto add = [&](std::string name, Real lhs, Real rhs, Real tol) {
    report.checks.push_back(
        {std::move(name), lhs, rhs, rhs - lhs, lhs <= rhs + tol});
  };

  const Real smooth_u =
      std::sqrt(static_cast<Real>(w.lambda_v.size())) *
      ((1.0 + hp.alpha0) * c_v + w.lambda_u.maxCoeff());
  add("primal_vu_descent", l_vu - l_kk,
      0.5 * (smooth_u - 1.0 / hp.gamma) * du2 -
          0.5 * w.lambda_v.minCoeff() * dv2,
      slack);
  add("consensus_descent", l_s - l_vu, -0.5 * hp.rho * ds2, slack);

  const Real lf2 = hp.lambda_f * hp.lambda_f;
  add("dual_ascent_bound", l_w - l_s,
      (3.0 * lf2 * c_v * c_v / hp.rho) * ds2 +
          (6.0 * lf2 * c_v * c_s / hp.rho) * dv2,
      slack);
  {
    // The dual step changes L_rho by exactly rho |dw|^2.
    const Real lhs = l_w - l_s;
    const Real rhs = hp.rho * dw2;
    const Real tol = 1e-9 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
    report.checks.push_back({"dual_ascent_identity", lhs, rhs,
                             tol - std::abs(lhs - rhs),
                             std::abs(lhs - rhs) <= tol});
  }

  const Real floor_coef = 0.5 * (hp.rho - hp.lambda_f * c_v);
  const Vector gap_a = mean_user_vector(a.u, ex) - a.s;
  add("lower_bound_at_k", floor_coef * gap_a.squaredNorm(), l_kk, slack);
  const Vector gap_b = mean_user_vector(b.u, ex) - b.s;
  add("lower_bound_at_k1", floor_coef * gap_b.squaredNorm(), l_w, slack);

  (void)n_users;
  return report;
}

namespace detail {

// Dense V-gradient of the smooth objective g, one ridge system per item row.
inline FactorMatrix grad_v_dense(const SparseBinaryMatrix& m,
                                 const FactorMatrix& u, const FactorMatrix& v,
                                 const Vector& s, const RegWeights& w,
                                 Real alpha0, Real lambda_f) {
  const Matrix g_u = gramian(u);
  FactorMatrix g(m.n_items, v.cols());
  for (int j = 0; j < m.n_items; ++j) {
    const auto vj = v.row(j);
    Vector x = alpha0 * (g_u * vj.transpose()) + w.lambda_v[j] * vj.transpose();
    if (lambda_f != 0) x += lambda_f * s * s.dot(vj);
    for (const std::int32_t i : m.col(j)) {
      const auto ui = u.row(i);
      x += ui.transpose() * (ui.dot(vj) - 1.0);
    }
    g.row(j) = x.transpose();
  }
  return g;
}

// Smooth objective g = L_ials + lambda_f/2 |V s|^2 (no penalty terms).
inline Real g_value(const SparseBinaryMatrix& m, const FactorMatrix& u,
                    const FactorMatrix& v, const Vector& s,
                    const RegWeights& w, const HyperParams& hp) {
  const Real fair =
      hp.lambda_f == 0 ? 0.0 : 0.5 * hp.lambda_f * (v * s).squaredNorm();
  return ials_loss(m, u, v, w, hp.alpha0) + fair;
}

}  // namespace detail

// Direct sampling check of the four Lipschitz bounds on the gradients of g.
// One random interaction fixture and one random weight fixture; every draw
// uses fresh factor matrices with bounded norms and fresh (alpha0, lambda_f).
struct SmoothnessReport {
  int samples = 0;
  int violations = 0;
  Real worst_margin = std::numeric_limits<Real>::infinity();
  std::array<int, 4> violations_by_inequality{};
};

inline SmoothnessReport check_smoothness(int samples, int n_users,
                                         int n_items, int d,
                                         std::uint64_t seed) {
  if (samples < 1 || n_users < 1 || n_items < 1 || d < 1) {
    throw std::invalid_argument("check_smoothness: bad dimensions");
  }
  std::mt19937_64 gen(derive_seed(seed, 0x534d4f4f5448));  // "SMOOTH"
  NormalSampler normal(derive_seed(seed, 1));

  // Interaction fixture with about 30% density, at least one nonzero.
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (int i = 0; i < n_users; ++i) {
    for (int j = 0; j < n_items; ++j) {
      if (uniform_real(gen) < 0.3) pairs.emplace_back(i, j);
    }
  }
  if (pairs.empty()) pairs.emplace_back(0, 0);
  const SparseBinaryMatrix m =
      SparseBinaryMatrix::from_pairs(n_users, n_items, std::move(pairs));
  RegWeights w;
  w.lambda_u.resize(n_users);
  for (int i = 0; i < n_users; ++i) {
    w.lambda_u[i] = 0.1 + 1.9 * uniform_real(gen);
  }
  w.lambda_v.resize(n_items);
  for (int j = 0; j < n_items; ++j) {
    w.lambda_v[j] = 0.1 + 1.9 * uniform_real(gen);
  }
  const Real lambda_u_max = w.lambda_u.maxCoeff();
  const Real lambda_v_max = w.lambda_v.maxCoeff();

  auto random_factors = [&](int rows) {
    FactorMatrix f(rows, d);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < d; ++c) f(r, c) = normal.next();
    }
    const Real target = 0.1 + 2.9 * uniform_real(gen);
    return FactorMatrix((target / f.norm()) * f);
  };
  auto random_vec = [&] {
    Vector s(d);
    for (int c = 0; c < d; ++c) s[c] = normal.next();
    const Real target = 0.1 + 2.9 * uniform_real(gen);
    return Vector((target / s.norm()) * s);
  };

  SmoothnessReport report;
  report.samples = samples;
  auto tally = [&](int idx, Real lhs, Real rhs) {
    const Real margin = rhs - lhs;
    report.worst_margin = std::min(report.worst_margin, margin);
    if (lhs > rhs + 1e-9 * std::max(1.0, std::abs(rhs))) {
      report.violations++;
      report.violations_by_inequality[static_cast<std::size_t>(idx)]++;
    }
  };

  for (int it = 0; it < samples; ++it) {
    const FactorMatrix u = random_factors(n_users);
    const FactorMatrix u2 = random_factors(n_users);
    const FactorMatrix v = random_factors(n_items);
    const FactorMatrix v2 = random_factors(n_items);
    const Vector s = random_vec();
    const Vector s2 = random_vec();
    const Real alpha0 = uniform_real(gen);
    const Real lambda_f = 5.0 * uniform_real(gen);

    // V-gradient in V, at fixed (U, s). The fairness term contributes
    // lambda_f |s|^2 to the modulus; the proof's constant carries lambda_f.
    {
      const FactorMatrix ga =
          detail::grad_v_dense(m, u, v, s, w, alpha0, lambda_f);
      const FactorMatrix gb =
          detail::grad_v_dense(m, u, v2, s, w, alpha0, lambda_f);
      const Real modulus = std::sqrt(static_cast<Real>(n_items)) *
                           ((1.0 + alpha0) * u.squaredNorm() +
                            lambda_f * s.squaredNorm() + lambda_v_max);
      tally(0, (ga - gb).norm(), modulus * (v - v2).norm());
    }
    // U-gradient in U; s may move freely since g's U-slope ignores it.
    {
      AdmmState st;
      st.v = v;
      st.g_v = gramian(v);
      st.g_v_fresh = true;
      HyperParams hp;
      hp.alpha0 = alpha0;
      st.u = u;
      const FactorMatrix ga = grad_u(m, st, w, hp);
      st.u = u2;
      const FactorMatrix gb = grad_u(m, st, w, hp);
      const Real modulus = std::sqrt(static_cast<Real>(n_users)) *
                           ((1.0 + alpha0) * v.squaredNorm() + lambda_u_max);
      tally(1, (ga - gb).norm(), modulus * (u - u2).norm());
    }
    // s-gradient in s at fixed V.
    {
      const Matrix g_v = gramian(v);
      const Vector ga = lambda_f * (g_v * s);
      const Vector gb = lambda_f * (g_v * s2);
      tally(2, (ga - gb).norm(),
            lambda_f * v.squaredNorm() * (s - s2).norm());
    }
    // s-gradient in V at fixed s.
    {
      const Vector ga = lambda_f * (gramian(v) * s);
      const Vector gb = lambda_f * (gramian(v2) * s);
      tally(3, (ga - gb).norm(),
            lambda_f * (v.norm() + v2.norm()) * s.norm() * (v - v2).norm());
    }
  }
  return report;
}

// Central-difference validation of the analytic gradients of both g and
// L_rho at a given state, over randomly sampled coordinates of U, V, and s.
struct FiniteDiffReport {
  int coords = 0;
  Real max_rel_err_g = 0;
  Real max_rel_err_lrho = 0;
};

inline FiniteDiffReport finite_diff_check(const SparseBinaryMatrix& m,
                                          const AdmmSnapshot& st,
                                          const RegWeights& w,
                                          const HyperParams& hp,
                                          Real eps = 1e-5, int n_coords = 120,
                                          std::uint64_t seed = 0) {
  if (!(eps > 0)) {
    throw std::invalid_argument("finite_diff_check: eps must be > 0");
  }
  if (n_coords < 1) {
    throw std::invalid_argument("finite_diff_check: need at least 1 coord");
  }
  std::mt19937_64 gen(derive_seed(seed, 0x4644));  // "FD"

  // Analytic gradients at the base point.
  AdmmState base;
  base.u = st.u;
  base.v = st.v;
  base.s = st.s;
  base.w = st.w;
  base.g_v = gramian(st.v);
  base.g_v_fresh = true;
  const FactorMatrix g_u_grad = grad_u(m, base, w, hp);
  const FactorMatrix g_v_grad = detail::grad_v_dense(
      m, st.u, st.v, st.s, w, hp.alpha0, hp.lambda_f);
  const Vector g_s_grad = hp.lambda_f * (base.g_v * st.s);

  const Real n_users = static_cast<Real>(st.u.rows());
  const Vector t = mean_user_vector(st.u);
  const Vector resid = t - st.s + st.w;
  const FactorMatrix lrho_u_grad =
      g_u_grad + (hp.rho / n_users) * Vector::Ones(st.u.rows()) *
                     resid.transpose();
  const FactorMatrix& lrho_v_grad = g_v_grad;  // penalty is V-free
  const Vector lrho_s_grad = g_s_grad - hp.rho * resid;

  FactorMatrix u_pert = st.u;
  FactorMatrix v_pert = st.v;
  Vector s_pert = st.s;
  const auto g_at = [&] {
    return detail::g_value(m, u_pert, v_pert, s_pert, w, hp);
  };
  const auto lrho_at = [&] {
    return augmented_lagrangian(m, u_pert, v_pert, s_pert, st.w, w, hp);
  };
  const auto rel_err = [](Real got, Real want) {
    return std::abs(got - want) /
           std::max({1.0, std::abs(got), std::abs(want)});
  };

  FiniteDiffReport report;
  report.coords = n_coords;
  for (int c = 0; c < n_coords; ++c) {
    Real* slot = nullptr;
    Real analytic_g = 0, analytic_lrho = 0;
    switch (c % 3) {
      case 0: {
        const auto i = static_cast<Eigen::Index>(
            uniform_index(gen, static_cast<std::uint64_t>(st.u.size())));
        slot = u_pert.data() + i;
        analytic_g = g_u_grad.data()[i];
        analytic_lrho = lrho_u_grad.data()[i];
        break;
      }
      case 1: {
        const auto i = static_cast<Eigen::Index>(
            uniform_index(gen, static_cast<std::uint64_t>(st.v.size())));
        slot = v_pert.data() + i;
        analytic_g = g_v_grad.data()[i];
        analytic_lrho = lrho_v_grad.data()[i];
        break;
      }
      default: {
        const auto i = static_cast<Eigen::Index>(
            uniform_index(gen, static_cast<std::uint64_t>(st.s.size())));
        slot = s_pert.data() + i;
        analytic_g = g_s_grad[i];
        analytic_lrho = lrho_s_grad[i];
        break;
      }
    }
    const Real saved = *slot;
    *slot = saved + eps;
    const Real g_hi = g_at(), l_hi = lrho_at();
    *slot = saved - eps;
    const Real g_lo = g_at(), l_lo = lrho_at();
    *slot = saved;
    report.max_rel_err_g = std::max(
        report.max_rel_err_g, rel_err((g_hi - g_lo) / (2 * eps), analytic_g));
    report.max_rel_err_lrho =
        std::max(report.max_rel_err_lrho,
                 rel_err((l_hi - l_lo) / (2 * eps), analytic_lrho));
  }
  return report;
}

// Aggregate of every check over one training run; what the diagnose command
// reports.
struct DiagnosticsReport {
  int n_epochs = 0;
  bool aborted = false;
  int abort_epoch = -1;
  std::string abort_variable;
  TheoremConstants constants;
  int monotonicity_violations = 0;
  Real max_l_rho_increase = 0;
  int lemma_violations = 0;
  std::vector<LemmaCheck> worst_by_name;  // one entry per inequality
  SmoothnessReport smoothness;
  FiniteDiffReport finite_diff;
  EpochTrace trace;
};

// Trains on m with hp, recording every epoch, then runs the full battery. A
// divergent run is not an error here: the abort is recorded and the checks
// cover the epochs that completed.
inline DiagnosticsReport run_diagnostics(const SparseBinaryMatrix& m,
                                         const HyperParams& hp,
                                         const ExecPolicy& ex = {},
                                         int smoothness_samples = 200,
                                         int fd_coords = 120,
                                         Real lemma_slack = 1e-8) {
  DiagnosticsReport report;
  std::vector<AdmmSnapshot> history;
  AdmmOptions opts;
  opts.exec = ex;
  opts.on_epoch = [&](const AdmmState& st, const EpochRow& row) {
    history.push_back(AdmmSnapshot::from(st));
    report.trace.push_back(row);
  };
  try {
    train_fiadmm(m, hp, opts);
  } catch (const DivergenceError& e) {
    report.aborted = true;
    report.abort_epoch = e.epoch();
    report.abort_variable = e.variable();
  }
  report.n_epochs = static_cast<int>(report.trace.size());
  const RegWeights w = frequency_weights(m, hp.lambda2, hp.eta, hp.alpha0);
  if (!history.empty()) {
    report.constants = theorem_conditions(history, w, hp);
  }
  for (std::size_t e = 1; e < report.trace.size(); ++e) {
    const Real rise = report.trace[e].l_rho - report.trace[e - 1].l_rho;
    const Real tol = 1e-8 * std::max(1.0, std::abs(report.trace[e - 1].l_rho));
    if (rise > tol) {
      report.monotonicity_violations++;
      report.max_l_rho_increase = std::max(report.max_l_rho_increase, rise);
    }
  }
  for (std::size_t e = 1; e < history.size(); ++e) {
    const LemmaReport lr = check_descent_lemmas(m, history[e - 1], history[e],
                                                w, hp, lemma_slack, ex);
    report.lemma_violations += lr.violations();
    for (const auto& c : lr.checks) {
      auto it = std::find_if(report.worst_by_name.begin(),
                             report.worst_by_name.end(),
                             [&](const LemmaCheck& x) {
                               return x.name == c.name;
                             });
      if (it == report.worst_by_name.end()) {
        report.worst_by_name.push_back(c);
      } else if (c.margin < it->margin) {
        *it = c;
      }
    }
  }
  report.smoothness = check_smoothness(smoothness_samples, 8, 6, 3,
                                       hp.seed + 17);
  if (!history.empty()) {
    report.finite_diff = finite_diff_check(m, history.back(), w, hp, 1e-5,
                                           fd_coords, hp.seed + 23);
  }
  return report;
}

}  // namespace fairmf
