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

// Seeded synthetic interaction data for tests. Popularity follows a Zipf
// profile so exposure concentration is present by construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "fairmf/rng.hpp"
#include "fairmf/types.hpp"

namespace fairmf::synthetic {

// Each user draws between min_deg and max_deg distinct items with
// P(j) proportional to (j + 1)^-zipf_a. Users are guaranteed nonempty.
inline SparseBinaryMatrix zipf_matrix(int n_users, int n_items, int min_deg,
                                      int max_deg, double zipf_a,
                                      std::uint64_t seed) {
  std::vector<double> cdf(n_items);
  double acc = 0;
  for (int j = 0; j < n_items; ++j) {
    acc += std::pow(static_cast<double>(j + 1), -zipf_a);
    cdf[j] = acc;
  }
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (int u = 0; u < n_users; ++u) {
    std::mt19937_64 gen(derive_seed(seed, static_cast<std::uint64_t>(u)));
    const int deg = min_deg + static_cast<int>(uniform_index(
                                  gen, static_cast<std::size_t>(
                                           max_deg - min_deg + 1)));
    std::vector<bool> taken(n_items, false);
    int got = 0;
    while (got < deg && got < n_items) {
      const double x = uniform_real(gen) * acc;
      const int j = static_cast<int>(
          std::lower_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
      const int jj = std::min(j, n_items - 1);
      if (taken[jj]) continue;
      taken[jj] = true;
      pairs.emplace_back(u, jj);
      ++got;
    }
  }
  return SparseBinaryMatrix::from_pairs(n_users, n_items, pairs);
}

}  // namespace fairmf::synthetic
