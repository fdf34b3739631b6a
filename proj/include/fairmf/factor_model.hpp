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
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fairmf/parallel.hpp"
#include "fairmf/rng.hpp"
#include "fairmf/types.hpp"

namespace fairmf {

// i.i.d. N(0, (sigma/sqrt(d))^2) entries, filled in row-major order so the
// draw sequence is part of the format.
inline FactorMatrix init_factors(int n_rows, int d, Real sigma,
                                 std::uint64_t seed) {
  if (n_rows < 0 || d < 1) {
    throw std::invalid_argument("init_factors: bad dimensions");
  }
  if (!(sigma > 0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("init_factors: sigma must be > 0");
  }
  FactorMatrix f(n_rows, d);
  NormalSampler normal(seed);
  const Real scale = sigma / std::sqrt(static_cast<Real>(d));
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < d; ++c) f(r, c) = scale * normal.next();
  }
  return f;
}

// F^T F as a dense d x d matrix, reduced over fixed row chunks.
inline Matrix gramian(const FactorMatrix& f, const ExecPolicy& ex = {}) {
  const int d = static_cast<int>(f.cols());
  const Matrix zero = Matrix::Zero(d, d);
  return chunked_reduce<Matrix>(
      f.rows(), ex, zero,
      [&](std::int64_t begin, std::int64_t end) -> Matrix {
        const auto block = f.middleRows(begin, end - begin);
        return block.transpose() * block;
      },
      [](Matrix acc, const Matrix& p) -> Matrix { return acc + p; });
}

// Column sums of F divided by the row count: t = (1/n) F^T 1.
inline Vector mean_user_vector(const FactorMatrix& f, const ExecPolicy& ex = {}) {
  if (f.rows() == 0) {
    throw std::invalid_argument("mean_user_vector: empty factor matrix");
  }
  const Vector zero = Vector::Zero(f.cols());
  Vector sum = chunked_reduce<Vector>(
      f.rows(), ex, zero,
      [&](std::int64_t begin, std::int64_t end) -> Vector {
        return f.middleRows(begin, end - begin).colwise().sum().transpose();
      },
      [](Vector acc, const Vector& p) -> Vector { return acc + p; });
  return sum / static_cast<Real>(f.rows());
}

// Frequency-scaled L2 weights: lambda_u[i] = lambda2 * (deg_i + alpha0*|V|)^eta
// and symmetrically for items.
inline RegWeights frequency_weights(const SparseBinaryMatrix& m, Real lambda2,
                                    Real eta, Real alpha0) {
  if (!(lambda2 > 0)) {
    throw std::invalid_argument("frequency_weights: lambda2 must be > 0");
  }
  if (eta < 0 || alpha0 < 0) {
    throw std::invalid_argument("frequency_weights: eta, alpha0 must be >= 0");
  }
  RegWeights w;
  w.lambda_u.resize(m.n_users);
  for (int u = 0; u < m.n_users; ++u) {
    w.lambda_u[u] = lambda2 * std::pow(m.row_degree(u) + alpha0 * m.n_items,
                                       eta);
  }
  w.lambda_v.resize(m.n_items);
  for (int j = 0; j < m.n_items; ++j) {
    w.lambda_v[j] = lambda2 * std::pow(m.col_degree(j) + alpha0 * m.n_users,
                                       eta);
  }
  return w;
}

// Ranked top-k item ids for one user vector under the total order
// (score desc, id asc). exclude must be sorted ascending; excluded ids never
// appear. Output length is min(k, #eligible).
inline std::vector<int> score_topk(const Vector& u, const FactorMatrix& v,
                                   int k,
                                   std::span<const int> exclude = {}) {
  if (k < 1) throw std::invalid_argument("score_topk: k must be >= 1");
  if (u.size() != v.cols()) {
    throw std::invalid_argument("score_topk: dimension mismatch");
  }
  const Vector scores = v * u;
  const int n = static_cast<int>(v.rows());
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    if (!std::binary_search(exclude.begin(), exclude.end(), j)) {
      ids.push_back(j);
    }
  }
  const auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t kk = std::min<std::size_t>(ids.size(),
                                               static_cast<std::size_t>(k));
  std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(), better);
  ids.resize(kk);
  return ids;
}

// Binary factor dump: magic "FMF1", little-endian u32 rows, u32 cols, one
// byte of element width (8), then the row-major payload.
inline void save_factors(const std::string& path, const FactorMatrix& f) {
  static_assert(std::endian::native == std::endian::little,
                "factor dumps assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write factor file: " + path);
  out.write("FMF1", 4);
  const std::uint32_t n_rows = static_cast<std::uint32_t>(f.rows());
  const std::uint32_t d = static_cast<std::uint32_t>(f.cols());
  const std::uint8_t width = 8;
  out.write(reinterpret_cast<const char*>(&n_rows), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&width), 1);
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(sizeof(Real) * f.size()));
  if (!out) throw std::runtime_error("short write on factor file: " + path);
}

inline FactorMatrix load_factors(const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "factor dumps assume a little-endian host");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open factor file: " + path);
  char magic[4] = {};
  std::uint32_t n_rows = 0, d = 0;
  std::uint8_t width = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n_rows), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&width), 1);
  if (!in || std::string(magic, 4) != "FMF1") {
    throw std::runtime_error("not a factor file: " + path);
  }
  if (width != 8) {
    throw std::runtime_error("unsupported element width in " + path);
  }
  FactorMatrix f(static_cast<int>(n_rows), static_cast<int>(d));
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(sizeof(Real) * f.size()));
  if (!in) throw std::runtime_error("truncated factor file: " + path);
  return f;
}

}  // namespace fairmf
