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
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fairmf/fiadmm.hpp"
#include "fairmf/ials.hpp"
#include "fairmf/interactions.hpp"
#include "fairmf/metrics.hpp"
#include "fairmf/types.hpp"

namespace fairmf {

enum class Solver { kIals, kFiadmm };

inline std::string solver_name(Solver s) {
  return s == Solver::kIals ? "ials" : "fiadmm";
}

inline Solver solver_from_name(const std::string& name) {
  if (name == "ials") return Solver::kIals;
  if (name == "fiadmm") return Solver::kFiadmm;
  throw std::invalid_argument("unknown solver: " + name);
}

// Submatrix holding the full rows of the listed users, reindexed to list
// order; the item space is unchanged.
inline SparseBinaryMatrix user_submatrix(const SparseBinaryMatrix& m,
                                         const std::vector<int>& users) {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t r = 0; r < users.size(); ++r) {
    for (const std::int32_t j : m.row(users[r])) {
      pairs.emplace_back(static_cast<std::int32_t>(r), j);
    }
  }
  return SparseBinaryMatrix::from_pairs(static_cast<int>(users.size()),
                                        m.n_items, std::move(pairs));
}

// Submatrix holding only the fold-in items of the listed holdout users.
inline SparseBinaryMatrix holdout_submatrix(const SplitSpec& split,
                                            const std::vector<int>& users,
                                            int n_items) {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t r = 0; r < users.size(); ++r) {
    const auto it = split.holdout.find(users[r]);
    if (it == split.holdout.end()) {
      throw std::invalid_argument("holdout_submatrix: user has no partition");
    }
    for (const int j : it->second.fold_in) {
      pairs.emplace_back(static_cast<std::int32_t>(r),
                         static_cast<std::int32_t>(j));
    }
  }
  return SparseBinaryMatrix::from_pairs(static_cast<int>(users.size()),
                                        n_items, std::move(pairs));
}

// Folds the listed holdout users into a frozen item space and scores their
// target items. Fold-in items are excluded from every ranking; users with an
// empty target are folded in but never scored. Metrics at K > |V| are
// computed at the effective K = |V| and reported as such.
inline EvalReport evaluate_holdout(const SplitSpec& split,
                                   const std::vector<int>& users,
                                   const FactorMatrix& v,
                                   const HyperParams& hp, Solver solver,
                                   const std::vector<int>& k_list,
                                   const ExecPolicy& ex = {}) {
  if (k_list.empty()) {
    throw std::invalid_argument("evaluate_holdout: empty K list");
  }
  for (const int k : k_list) {
    if (k < 1) throw std::invalid_argument("evaluate_holdout: K must be >= 1");
  }
  const int n_items = static_cast<int>(v.rows());

  EvalReport report;
  report.k_list = k_list;
  for (const int k : k_list) {
    report.effective_k.push_back(std::min(k, n_items));
  }
  const int k_max = *std::max_element(report.effective_k.begin(),
                                      report.effective_k.end());

  const SparseBinaryMatrix m_hold = holdout_submatrix(split, users, n_items);
  FactorMatrix u_hold;
  if (solver == Solver::kIals) {
    const RegWeights w_hold = frequency_weights(m_hold, hp.lambda2, hp.eta,
                                                hp.alpha0);
    u_hold = update_users_ials(m_hold, v, w_hold, hp.alpha0, ex);
  } else {
    AdmmOptions opts;
    opts.exec = ex;
    u_hold = fold_in(v, m_hold, hp, opts).u;
  }

  const std::size_t n_k = k_list.size();
  report.recall.assign(n_k, 0.0);
  report.ndcg.assign(n_k, 0.0);
  std::vector<std::vector<std::vector<int>>> lists_per_k(n_k);
  for (std::size_t r = 0; r < users.size(); ++r) {
    const auto& part = split.holdout.at(users[r]);
    if (part.target.empty()) continue;
    const Vector u_row = u_hold.row(static_cast<Eigen::Index>(r)).transpose();
    const std::vector<int> ranked = score_topk(u_row, v, k_max,
                                               part.fold_in);
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      const int k = report.effective_k[ki];
      const std::size_t depth = std::min<std::size_t>(
          ranked.size(), static_cast<std::size_t>(k));
      const std::span<const int> prefix(ranked.data(), depth);
      report.recall[ki] += recall_at_k(prefix, part.target, k);
      report.ndcg[ki] += ndcg_at_k(prefix, part.target, k);
      lists_per_k[ki].emplace_back(prefix.begin(), prefix.end());
    }
    report.n_users_evaluated++;
  }

  const Real nan = std::numeric_limits<Real>::quiet_NaN();
  for (std::size_t ki = 0; ki < n_k; ++ki) {
    if (report.n_users_evaluated == 0) {
      report.recall[ki] = nan;
      report.ndcg[ki] = nan;
      report.gini.push_back(nan);
      report.coverage.push_back(nan);
      report.exposure.push_back(Vector::Zero(n_items));
      continue;
    }
    report.recall[ki] /= report.n_users_evaluated;
    report.ndcg[ki] /= report.n_users_evaluated;
    const Vector o = exposure_vector(lists_per_k[ki], n_items);
    report.gini.push_back(gini_index(o));
    report.coverage.push_back(item_coverage(o));
    report.exposure.push_back(o);
  }
  return report;
}

struct ExperimentResult {
  FactorMatrix v;  // trained item factors
  EvalReport val;
  EvalReport test;
};

// Strong-generalization experiment: train on the train users' full rows,
// fold in and score the validation and test users.
inline ExperimentResult run_experiment(const SparseBinaryMatrix& m,
                                       const SplitSpec& split,
                                       const HyperParams& hp, Solver solver,
                                       const std::vector<int>& k_list,
                                       const ExecPolicy& ex = {}) {
  split.check(m);
  if (split.train_users.empty()) {
    throw std::invalid_argument("run_experiment: empty train user set");
  }
  const SparseBinaryMatrix m_train = user_submatrix(m, split.train_users);
  ExperimentResult r;
  if (solver == Solver::kIals) {
    r.v = train_ials(m_train, hp, ex).v;
  } else {
    AdmmOptions opts;
    opts.exec = ex;
    r.v = train_fiadmm(m_train, hp, opts).state.v;
  }
  r.val = evaluate_holdout(split, split.val_users, r.v, hp, solver, k_list,
                           ex);
  r.test = evaluate_holdout(split, split.test_users, r.v, hp, solver, k_list,
                            ex);
  return r;
}

// One point in the quality/unfairness plane: quality is better larger,
// unfairness better smaller.
struct ParetoPoint {
  Real quality = 0;
  Real unfairness = 0;
};

// Indices of the non-dominated points, sorted by unfairness ascending.
// Exact ties are all kept; a point is dropped only when some other point is
// at least as good on both axes and strictly better on one.
inline std::vector<int> pareto_frontier(const std::vector<ParetoPoint>& pts) {
  for (const auto& p : pts) {
    if (!std::isfinite(p.quality) || !std::isfinite(p.unfairness)) {
      throw std::invalid_argument("pareto_frontier: non-finite point");
    }
  }
  std::vector<int> order(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pts[a].unfairness != pts[b].unfairness) {
      return pts[a].unfairness < pts[b].unfairness;
    }
    if (pts[a].quality != pts[b].quality) {
      return pts[a].quality > pts[b].quality;
    }
    return a < b;
  });

  std::vector<int> keep;
  Real best_quality = -std::numeric_limits<Real>::infinity();
  std::size_t g = 0;
  while (g < order.size()) {
    std::size_t g_end = g;
    while (g_end < order.size() &&
           pts[order[g_end]].unfairness == pts[order[g]].unfairness) {
      ++g_end;
    }
    // Within an unfairness tier only the maximal quality survives, and only
    // if it strictly beats every lower tier.
    const Real tier_best = pts[order[g]].quality;
    if (tier_best > best_quality) {
      for (std::size_t p = g; p < g_end; ++p) {
        if (pts[order[p]].quality == tier_best) keep.push_back(order[p]);
      }
      best_quality = tier_best;
    }
    g = g_end;
  }
  return keep;
}

// One hyperparameter grid cell. A failed cell records its error and stays in
// the table without aborting the sweep.
struct GridCell {
  HyperParams hp;
  bool ok = false;
  std::string error;
  EvalReport val;
  EvalReport test;
  Real quality = std::numeric_limits<Real>::quiet_NaN();
  Real unfairness = std::numeric_limits<Real>::quiet_NaN();
};

// Value lists per axis; an empty list means the base value. The lambda_f,
// rho, and gamma axes only apply to the ADMM solver.
struct GridSpec {
  std::vector<Real> lambda2;
  std::vector<Real> alpha0;
  std::vector<Real> lambda_f;
  std::vector<Real> rho;
  std::vector<Real> gamma;
};

struct GridSearchResult {
  std::vector<GridCell> cells;
  std::vector<int> frontier;  // indices into cells, unfairness ascending
  int quality_k = 0;          // K at which quality and unfairness are read
};

// Cartesian sweep over the grid, scored on the validation split. Quality is
// nDCG@quality_k and unfairness is Gini@quality_k.
inline GridSearchResult grid_search(const SparseBinaryMatrix& m,
                                    const SplitSpec& split,
                                    const HyperParams& base, Solver solver,
                                    const GridSpec& grid,
                                    const std::vector<int>& k_list,
                                    int quality_k = 100,
                                    const ExecPolicy& ex = {}) {
  auto axis = [](const std::vector<Real>& values, Real fallback) {
    return values.empty() ? std::vector<Real>{fallback} : values;
  };
  const auto lambda2s = axis(grid.lambda2, base.lambda2);
  const auto alpha0s = axis(grid.alpha0, base.alpha0);
  const bool admm = solver == Solver::kFiadmm;
  const auto lambda_fs =
      admm ? axis(grid.lambda_f, base.lambda_f) : std::vector<Real>{base.lambda_f};
  const auto rhos = admm ? axis(grid.rho, base.rho) : std::vector<Real>{base.rho};
  const auto gammas =
      admm ? axis(grid.gamma, base.gamma) : std::vector<Real>{base.gamma};

  std::vector<int> ks = k_list;
  if (std::find(ks.begin(), ks.end(), quality_k) == ks.end()) {
    ks.push_back(quality_k);
  }

  GridSearchResult out;
  out.quality_k = quality_k;
  for (const Real lambda2 : lambda2s) {
    for (const Real alpha0 : alpha0s) {
      for (const Real lambda_f : lambda_fs) {
        for (const Real rho : rhos) {
          for (const Real gamma : gammas) {
            GridCell cell;
            cell.hp = base;
            cell.hp.lambda2 = lambda2;
            cell.hp.alpha0 = alpha0;
            cell.hp.lambda_f = lambda_f;
            cell.hp.rho = rho;
            cell.hp.gamma = gamma;
            try {
              ExperimentResult r = run_experiment(m, split, cell.hp, solver,
                                                  ks, ex);
              cell.val = std::move(r.val);
              cell.test = std::move(r.test);
              const auto ki = static_cast<std::size_t>(
                  std::find(ks.begin(), ks.end(), quality_k) - ks.begin());
              cell.quality = cell.val.ndcg[ki];
              cell.unfairness = cell.val.gini[ki];
              cell.ok = std::isfinite(cell.quality) &&
                        std::isfinite(cell.unfairness);
              if (!cell.ok) cell.error = "no evaluated users";
            } catch (const std::exception& e) {
              cell.ok = false;
              cell.error = e.what();
            }
            out.cells.push_back(std::move(cell));
          }
        }
      }
    }
  }

  std::vector<ParetoPoint> pts;
  std::vector<int> ok_index;
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    if (out.cells[i].ok) {
      pts.push_back({out.cells[i].quality, out.cells[i].unfairness});
      ok_index.push_back(static_cast<int>(i));
    }
  }
  for (const int kept : pareto_frontier(pts)) {
    out.frontier.push_back(ok_index[static_cast<std::size_t>(kept)]);
  }
  return out;
}

}  // namespace fairmf
