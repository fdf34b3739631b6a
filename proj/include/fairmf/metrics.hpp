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
#include <span>
#include <stdexcept>
#include <vector>

#include "fairmf/types.hpp"

namespace fairmf {

// Recall@k: |top-k hits| / min(k, |targets|). targets must be sorted
// ascending; ranked may be shorter than k when few items are eligible.
inline Real recall_at_k(std::span<const int> ranked,
                        std::span<const int> targets, int k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  if (targets.empty()) {
    throw std::invalid_argument("recall_at_k: empty target set");
  }
  const std::size_t depth = std::min<std::size_t>(ranked.size(),
                                                  static_cast<std::size_t>(k));
  int hits = 0;
  for (std::size_t p = 0; p < depth; ++p) {
    if (std::binary_search(targets.begin(), targets.end(), ranked[p])) ++hits;
  }
  const int denom = std::min<int>(k, static_cast<int>(targets.size()));
  return static_cast<Real>(hits) / static_cast<Real>(denom);
}

// nDCG@k with gain 1/log2(position + 1) at 1-based positions; the ideal DCG
// places min(k, |targets|) hits at the top.
inline Real ndcg_at_k(std::span<const int> ranked,
                      std::span<const int> targets, int k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  if (targets.empty()) {
    throw std::invalid_argument("ndcg_at_k: empty target set");
  }
  const std::size_t depth = std::min<std::size_t>(ranked.size(),
                                                  static_cast<std::size_t>(k));
  Real dcg = 0;
  for (std::size_t p = 0; p < depth; ++p) {
    if (std::binary_search(targets.begin(), targets.end(), ranked[p])) {
      dcg += 1.0 / std::log2(static_cast<Real>(p + 2));
    }
  }
  Real ideal = 0;
  const int n_ideal = std::min<int>(k, static_cast<int>(targets.size()));
  for (int p = 0; p < n_ideal; ++p) {
    ideal += 1.0 / std::log2(static_cast<Real>(p + 2));
  }
  return dcg / ideal;
}

// Per-item exposure counts: o_j = number of lists containing item j.
inline Vector exposure_vector(const std::vector<std::vector<int>>& topk_lists,
                              int n_items) {
  if (n_items < 1) {
    throw std::invalid_argument("exposure_vector: n_items must be >= 1");
  }
  Vector o = Vector::Zero(n_items);
  for (const auto& list : topk_lists) {
    for (const int j : list) {
      if (j < 0 || j >= n_items) {
        throw std::invalid_argument("exposure_vector: item id out of range");
      }
      o[j] += 1.0;
    }
  }
  return o;
}

// Gini index of an exposure vector with the standard normalization
//   G = sum_{j,l} |o_j - o_l| / (2 |V| sum_j o_j),
// computed in O(|V| log |V|) by sorting and prefix weights. Zero for uniform
// exposure, 1 - 1/|V| for one-hot.
inline Real gini_index(const Vector& exposure) {
  const auto n = exposure.size();
  if (n < 1) throw std::invalid_argument("gini_index: empty exposure vector");
  Real total = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(exposure[j] >= 0)) {
      throw std::invalid_argument("gini_index: exposures must be >= 0");
    }
    total += exposure[j];
  }
  if (total == 0) {
    throw std::invalid_argument("gini_index: all-zero exposure vector");
  }
  std::vector<Real> sorted(exposure.data(), exposure.data() + n);
  std::sort(sorted.begin(), sorted.end());
  Real acc = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    // 1-based rank r contributes (2r - n - 1) * o_(r).
    acc += (2.0 * static_cast<Real>(j + 1) - static_cast<Real>(n) - 1.0) *
           sorted[static_cast<std::size_t>(j)];
  }
  return acc / (static_cast<Real>(n) * total);
}

// Fraction of items with nonzero exposure.
inline Real item_coverage(const Vector& exposure) {
  if (exposure.size() < 1) {
    throw std::invalid_argument("item_coverage: empty exposure vector");
  }
  const auto covered = (exposure.array() > 0).count();
  return static_cast<Real>(covered) / static_cast<Real>(exposure.size());
}

// Ranking metrics for one holdout side at every requested K. effective_k
// differs from k_list when K exceeds the item count.
struct EvalReport {
  std::vector<int> k_list;
  std::vector<int> effective_k;
  std::vector<Real> recall;    // per K, averaged over evaluated users
  std::vector<Real> ndcg;      // per K
  std::vector<Real> gini;      // per K
  std::vector<Real> coverage;  // per K
  std::vector<Vector> exposure;  // per K, length n_items
  int n_users_evaluated = 0;
};

}  // namespace fairmf
