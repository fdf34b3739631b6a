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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fairmf/rng.hpp"
#include "fairmf/types.hpp"

namespace fairmf {

// One raw interaction record. Rating and timestamp are optional columns.
struct Interaction {
  std::string user;
  std::string item;
  std::optional<Real> rating;
  std::optional<std::int64_t> timestamp;
};

using InteractionLog = std::vector<Interaction>;

struct FileFormat {
  char delimiter = '\t';
  bool has_header = false;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line,
                                           char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

// Reads delimiter-separated lines of (user, item[, rating[, timestamp]]).
// Extra columns are ignored. Any malformed line is an error naming its
// 1-based line number.
inline InteractionLog load_interactions(const std::string& path,
                                        const FileFormat& fmt = {}) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open interactions file: " + path);
  }
  InteractionLog log;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (fmt.has_header && line_no == 1) continue;
    if (line.empty()) continue;
    const auto fields = detail::split_line(line, fmt.delimiter);
    const auto fail = [&](const std::string& why) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": " + why);
    };
    if (fields.size() < 2) fail("fewer than 2 columns");
    if (fields[0].empty()) fail("empty user id");
    if (fields[1].empty()) fail("empty item id");
    Interaction rec{fields[0], fields[1], std::nullopt, std::nullopt};
    if (fields.size() >= 3 && !fields[2].empty()) {
      try {
        std::size_t used = 0;
        rec.rating = std::stod(fields[2], &used);
        if (used != fields[2].size()) fail("non-numeric rating field");
      } catch (const std::logic_error&) {
        fail("non-numeric rating field");
      }
    }
    if (fields.size() >= 4 && !fields[3].empty()) {
      std::int64_t ts = 0;
      const auto [ptr, ec] = std::from_chars(
          fields[3].data(), fields[3].data() + fields[3].size(), ts);
      if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size()) {
        fail("non-numeric timestamp field");
      }
      rec.timestamp = ts;
    }
    log.push_back(std::move(rec));
  }
  return log;
}

// Binarized matrix plus the dense remapping back to external ids. Index order
// is first appearance among the surviving records.
struct BinarizeResult {
  SparseBinaryMatrix matrix;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
};

// Keeps records with rating >= threshold (records without a rating always
// count), deduplicates, then alternately drops users and items below the
// minimum distinct-interaction counts until stable.
inline BinarizeResult binarize_and_filter(const InteractionLog& log,
                                          Real rating_threshold = 4.0,
                                          int min_user_count = 5,
                                          int min_item_count = 1) {
  if (min_user_count < 1 || min_item_count < 1) {
    throw std::invalid_argument("minimum counts must be >= 1");
  }
  // Unique kept pairs in first-appearance order.
  std::vector<std::pair<std::string, std::string>> pairs;
  {
    std::unordered_set<std::string> seen;
    for (const auto& rec : log) {
      if (rec.rating && *rec.rating < rating_threshold) continue;
      std::string key = rec.user + '\x1f' + rec.item;
      if (seen.insert(std::move(key)).second) {
        pairs.emplace_back(rec.user, rec.item);
      }
    }
  }
  std::unordered_set<std::string> dead_users, dead_items;
  while (true) {
    std::unordered_map<std::string, int> user_deg, item_deg;
    for (const auto& [u, i] : pairs) {
      if (dead_users.count(u) || dead_items.count(i)) continue;
      user_deg[u]++;
      item_deg[i]++;
    }
    bool changed = false;
    for (const auto& [u, deg] : user_deg) {
      if (deg < min_user_count) {
        dead_users.insert(u);
        changed = true;
      }
    }
    for (const auto& [i, deg] : item_deg) {
      if (deg < min_item_count) {
        dead_items.insert(i);
        changed = true;
      }
    }
    if (!changed) break;
  }

  BinarizeResult out;
  std::unordered_map<std::string, std::int32_t> user_index, item_index;
  std::vector<std::pair<std::int32_t, std::int32_t>> dense;
  for (const auto& [u, i] : pairs) {
    if (dead_users.count(u) || dead_items.count(i)) continue;
    auto [uit, unew] = user_index.try_emplace(
        u, static_cast<std::int32_t>(out.user_ids.size()));
    if (unew) out.user_ids.push_back(u);
    auto [iit, inew] = item_index.try_emplace(
        i, static_cast<std::int32_t>(out.item_ids.size()));
    if (inew) out.item_ids.push_back(i);
    dense.emplace_back(uit->second, iit->second);
  }
  if (dense.empty()) {
    throw std::runtime_error("binarize_and_filter: no interactions survive");
  }
  out.matrix = SparseBinaryMatrix::from_pairs(
      static_cast<int>(out.user_ids.size()),
      static_cast<int>(out.item_ids.size()), std::move(dense));
  return out;
}

// Strong-generalization split: disjoint train/validation/test user sets, and
// for every holdout user a fold-in/target partition of their items. A target
// left empty flags the user as excluded from metrics.
struct SplitSpec {
  struct Holdout {
    std::vector<int> fold_in;  // sorted item ids
    std::vector<int> target;   // sorted item ids; empty means excluded
  };

  std::vector<int> train_users;  // sorted
  std::vector<int> val_users;    // sorted
  std::vector<int> test_users;   // sorted
  std::map<int, Holdout> holdout;

  // Verifies the split describes exactly this matrix.
  void check(const SparseBinaryMatrix& m) const {
    std::vector<char> seen(static_cast<std::size_t>(m.n_users), 0);
    auto absorb = [&](const std::vector<int>& users) {
      for (int u : users) {
        if (u < 0 || u >= m.n_users) {
          throw std::logic_error("split: user id out of range");
        }
        if (seen[static_cast<std::size_t>(u)]++) {
          throw std::logic_error("split: user sets overlap");
        }
      }
    };
    absorb(train_users);
    absorb(val_users);
    absorb(test_users);
    for (int u = 0; u < m.n_users; ++u) {
      if (!seen[static_cast<std::size_t>(u)]) {
        throw std::logic_error("split: user missing from all sets");
      }
    }
    for (const auto& users : {val_users, test_users}) {
      for (int u : users) {
        const auto it = holdout.find(u);
        if (it == holdout.end()) {
          throw std::logic_error("split: holdout user without item partition");
        }
        std::vector<int> merged = it->second.fold_in;
        merged.insert(merged.end(), it->second.target.begin(),
                      it->second.target.end());
        std::sort(merged.begin(), merged.end());
        const auto r = m.row(u);
        if (merged.size() != r.size() ||
            !std::equal(merged.begin(), merged.end(), r.begin())) {
          throw std::logic_error(
              "split: fold-in/target do not partition the user's items");
        }
      }
    }
    if (holdout.size() != val_users.size() + test_users.size()) {
      throw std::logic_error("split: stray holdout entries");
    }
  }
};

// Splits users by a seeded permutation, then partitions each holdout user's
// items. The target side gets max(1, round((1 - fold_in_frac) * degree))
// items for degrees >= 2; users with fewer than 2 items fold in everything
// and are excluded from metrics.
inline SplitSpec strong_generalization_split(const SparseBinaryMatrix& m,
                                             Real val_frac, Real test_frac,
                                             Real fold_in_frac,
                                             std::uint64_t seed) {
  for (const Real f : {val_frac, test_frac, fold_in_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("split fractions must lie in [0, 1]");
    }
  }
  if (val_frac + test_frac > 1.0) {
    throw std::invalid_argument("holdout fractions sum to more than 1");
  }
  const int n = m.n_users;
  const int n_val = static_cast<int>(std::llround(val_frac * n));
  const int n_test = static_cast<int>(std::llround(test_frac * n));
  if (n_val + n_test > n) {
    throw std::invalid_argument("holdout fractions leave no train users");
  }

  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) perm[static_cast<std::size_t>(u)] = u;
  std::mt19937_64 gen(derive_seed(seed, UINT64_C(0x7065726d)));  // "perm"
  fisher_yates(perm, gen);

  SplitSpec split;
  const int n_train = n - n_val - n_test;
  split.train_users.assign(perm.begin(), perm.begin() + n_train);
  split.val_users.assign(perm.begin() + n_train,
                         perm.begin() + n_train + n_val);
  split.test_users.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(split.train_users.begin(), split.train_users.end());
  std::sort(split.val_users.begin(), split.val_users.end());
  std::sort(split.test_users.begin(), split.test_users.end());

  auto partition_user = [&](int u) {
    const auto r = m.row(u);
    SplitSpec::Holdout h;
    if (r.size() < 2) {
      h.fold_in.assign(r.begin(), r.end());
      return h;
    }
    const int deg = static_cast<int>(r.size());
    const int n_target = std::max<int>(
        1, static_cast<int>(std::llround((1.0 - fold_in_frac) * deg)));
    std::vector<int> items(r.begin(), r.end());
    // Per-user stream: membership is independent of processing order.
    std::mt19937_64 ugen(derive_seed(seed, static_cast<std::uint64_t>(u)));
    fisher_yates(items, ugen);
    h.target.assign(items.begin(), items.begin() + n_target);
    h.fold_in.assign(items.begin() + n_target, items.end());
    std::sort(h.target.begin(), h.target.end());
    std::sort(h.fold_in.begin(), h.fold_in.end());
    return h;
  };
  for (int u : split.val_users) split.holdout[u] = partition_user(u);
  for (int u : split.test_users) split.holdout[u] = partition_user(u);
  return split;
}

}  // namespace fairmf
