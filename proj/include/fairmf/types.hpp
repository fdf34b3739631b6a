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
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fairmf {

// All numerics run in 64-bit reals.
using Real = double;
// Factors are stored row-major: one contiguous row per user or item.
using Matrix =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using FactorMatrix = Matrix;

// Thrown when a solver variable turns non-finite; names the epoch and the
// offending variable so divergence fails loudly instead of poisoning traces.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, std::string variable)
      : std::runtime_error("non-finite value in '" + variable + "' at epoch " +
                           std::to_string(epoch)),
        epoch_(epoch),
        variable_(std::move(variable)) {}

  int epoch() const { return epoch_; }
  const std::string& variable() const { return variable_; }

 private:
  int epoch_;
  std::string variable_;
};

// Binarized interactions in compressed sparse row and column form.
// Invariants: ids strictly increasing within every row and column, and both
// views describe the same nonzero set.
struct SparseBinaryMatrix {
  int n_users = 0;
  int n_items = 0;
  std::vector<std::int64_t> row_ptr;   // size n_users + 1
  std::vector<std::int32_t> row_items; // item ids, row by row
  std::vector<std::int64_t> col_ptr;   // size n_items + 1
  std::vector<std::int32_t> col_users; // user ids, column by column

  std::int64_t nnz() const { return row_ptr.empty() ? 0 : row_ptr.back(); }

  std::span<const std::int32_t> row(int u) const {
    return {row_items.data() + row_ptr[u],
            static_cast<std::size_t>(row_ptr[u + 1] - row_ptr[u])};
  }

  std::span<const std::int32_t> col(int j) const {
    return {col_users.data() + col_ptr[j],
            static_cast<std::size_t>(col_ptr[j + 1] - col_ptr[j])};
  }

  int row_degree(int u) const {
    return static_cast<int>(row_ptr[u + 1] - row_ptr[u]);
  }

  int col_degree(int j) const {
    return static_cast<int>(col_ptr[j + 1] - col_ptr[j]);
  }

  bool has(int u, int j) const {
    auto r = row(u);
    return std::binary_search(r.begin(), r.end(), j);
  }

  // Builds both views from (user, item) pairs; duplicates collapse to one.
  static SparseBinaryMatrix from_pairs(
      int n_users, int n_items,
      std::vector<std::pair<std::int32_t, std::int32_t>> pairs) {
    if (n_users < 0 || n_items < 0) {
      throw std::invalid_argument("matrix dimensions must be non-negative");
    }
    for (const auto& [u, j] : pairs) {
      if (u < 0 || u >= n_users || j < 0 || j >= n_items) {
        throw std::invalid_argument(
            "interaction (" + std::to_string(u) + ", " + std::to_string(j) +
            ") outside " + std::to_string(n_users) + "x" +
            std::to_string(n_items));
      }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    SparseBinaryMatrix m;
    m.n_users = n_users;
    m.n_items = n_items;
    m.row_ptr.assign(n_users + 1, 0);
    m.col_ptr.assign(n_items + 1, 0);
    m.row_items.reserve(pairs.size());
    for (const auto& [u, j] : pairs) {
      m.row_ptr[u + 1]++;
      m.col_ptr[j + 1]++;
      m.row_items.push_back(j);
    }
    for (int u = 0; u < n_users; ++u) m.row_ptr[u + 1] += m.row_ptr[u];
    for (int j = 0; j < n_items; ++j) m.col_ptr[j + 1] += m.col_ptr[j];

    m.col_users.assign(pairs.size(), 0);
    std::vector<std::int64_t> fill(m.col_ptr.begin(), m.col_ptr.end() - 1);
    for (const auto& [u, j] : pairs) m.col_users[fill[j]++] = u;
    return m;
  }

  // Full invariant check; throws on the first violation. Test and load paths
  // only, cost is O(nnz log nnz).
  void check() const {
    if (static_cast<int>(row_ptr.size()) != n_users + 1 ||
        static_cast<int>(col_ptr.size()) != n_items + 1) {
      throw std::logic_error("sparse matrix: pointer array size mismatch");
    }
    if (row_ptr.front() != 0 || col_ptr.front() != 0 ||
        row_ptr.back() != static_cast<std::int64_t>(row_items.size()) ||
        col_ptr.back() != static_cast<std::int64_t>(col_users.size()) ||
        row_items.size() != col_users.size()) {
      throw std::logic_error("sparse matrix: pointer/payload size mismatch");
    }
    std::vector<std::pair<std::int32_t, std::int32_t>> from_rows;
    from_rows.reserve(row_items.size());
    for (int u = 0; u < n_users; ++u) {
      auto r = row(u);
      for (std::size_t p = 0; p < r.size(); ++p) {
        if (r[p] < 0 || r[p] >= n_items) {
          throw std::logic_error("sparse matrix: item id out of range");
        }
        if (p > 0 && r[p] <= r[p - 1]) {
          throw std::logic_error("sparse matrix: row ids not increasing");
        }
        from_rows.emplace_back(u, r[p]);
      }
    }
    std::vector<std::pair<std::int32_t, std::int32_t>> from_cols;
    from_cols.reserve(col_users.size());
    for (int j = 0; j < n_items; ++j) {
      auto c = col(j);
      for (std::size_t p = 0; p < c.size(); ++p) {
        if (c[p] < 0 || c[p] >= n_users) {
          throw std::logic_error("sparse matrix: user id out of range");
        }
        if (p > 0 && c[p] <= c[p - 1]) {
          throw std::logic_error("sparse matrix: column ids not increasing");
        }
        from_cols.emplace_back(c[p], j);
      }
    }
    std::sort(from_cols.begin(), from_cols.end());
    if (from_rows != from_cols) {
      throw std::logic_error("sparse matrix: row and column views disagree");
    }
  }
};

// Per-row regularization weights for both sides.
struct RegWeights {
  Vector lambda_u;
  Vector lambda_v;
};

// Every scalar the solvers expose. Defaults follow the reference training
// protocol: gamma 0.05, sigma 0.1, eta 1.0, 100 training and 50 fold-in
// epochs.
struct HyperParams {
  int d = 64;
  Real lambda2 = 3e-3;
  Real eta = 1.0;
  Real alpha0 = 0.1;
  Real lambda_f = 0.0;
  Real rho = 1e3;
  Real gamma = 0.05;
  Real sigma = 0.1;
  int t_train = 100;
  int t_fold = 50;
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](Real x) { return std::isfinite(x) && x > 0; };
    if (d < 1) throw std::invalid_argument("hyperparams: d must be >= 1");
    if (!positive(lambda2)) {
      throw std::invalid_argument("hyperparams: lambda2 must be > 0");
    }
    if (!std::isfinite(eta) || eta < 0) {
      throw std::invalid_argument("hyperparams: eta must be >= 0");
    }
    if (!positive(alpha0)) {
      throw std::invalid_argument("hyperparams: alpha0 must be > 0");
    }
    if (!std::isfinite(lambda_f) || lambda_f < 0) {
      throw std::invalid_argument("hyperparams: lambda_f must be >= 0");
    }
    if (!positive(rho)) {
      throw std::invalid_argument("hyperparams: rho must be > 0");
    }
    if (!positive(gamma)) {
      throw std::invalid_argument("hyperparams: gamma must be > 0");
    }
    if (!positive(sigma)) {
      throw std::invalid_argument("hyperparams: sigma must be > 0");
    }
    if (t_train < 0) {
      throw std::invalid_argument("hyperparams: t_train must be >= 0");
    }
    if (t_fold < 0) {
      throw std::invalid_argument("hyperparams: t_fold must be >= 0");
    }
  }
};

}  // namespace fairmf
