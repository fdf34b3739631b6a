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
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fairmf {

// Execution policy threaded through every parallel loop and reduction.
// threads <= 0 picks the hardware default. deterministic forces sequential
// summation order; the default mode reduces over fixed-size chunks combined
// in chunk order, so it is also run-to-run reproducible at any thread count,
// it just rounds differently than the sequential order.
struct ExecPolicy {
  int threads = 0;
  bool deterministic = false;

  int resolved_threads() const {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }
};

namespace detail {

// Rows per reduction chunk. Fixed so the combine order never depends on the
// thread count.
inline constexpr std::int64_t kReductionChunk = 1024;

}  // namespace detail

// Runs fn(i) for i in [0, n); iterations must be independent.
template <typename Fn>
void parallel_for(std::int64_t n, const ExecPolicy& ex, Fn&& fn) {
  const int threads = ex.deterministic ? 1 : ex.resolved_threads();
#ifdef _OPENMP
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
  (void)threads;
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

// Associative reduction over [0, n). chunk(begin, end) evaluates its range
// sequentially; join accumulates partials in chunk-index order. Deterministic
// mode evaluates one chunk spanning the whole range on the calling thread.
template <typename T, typename ChunkFn, typename JoinFn>
T chunked_reduce(std::int64_t n, const ExecPolicy& ex, T zero, ChunkFn&& chunk,
                 JoinFn&& join) {
  if (n <= 0) return zero;
  if (ex.deterministic) return chunk(std::int64_t{0}, n);

  const std::int64_t n_chunks =
      (n + detail::kReductionChunk - 1) / detail::kReductionChunk;
  std::vector<T> partials(static_cast<std::size_t>(n_chunks), zero);
  parallel_for(n_chunks, ex, [&](std::int64_t c) {
    const std::int64_t begin = c * detail::kReductionChunk;
    const std::int64_t end = std::min(n, begin + detail::kReductionChunk);
    partials[static_cast<std::size_t>(c)] = chunk(begin, end);
  });
  T acc = zero;
  for (const T& p : partials) acc = join(acc, p);
  return acc;
}

}  // namespace fairmf
