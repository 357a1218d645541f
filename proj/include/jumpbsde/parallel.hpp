// Copyright 2026 The jumpbsde Authors
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
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace jumpbsde {

/// Fixed work-unit size for all parallel loops and reductions. Partial sums
/// are formed per chunk and combined in chunk order, so floating-point
/// results do not depend on the number of workers.
inline constexpr std::size_t kChunkSize = 4096;

/// Worker count: JUMPBSDE_THREADS if set to a positive integer, otherwise
/// the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("JUMPBSDE_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && value > 0) {
      return static_cast<int>(value);
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

inline std::size_t chunk_count(std::size_t count) {
  return (count + kChunkSize - 1) / kChunkSize;
}

/// Calls body(begin, end, chunk_index) for each chunk of [0, count). An
/// exception thrown by any chunk is rethrown after the loop; when several
/// chunks fail, the one with the lowest index wins.
template <class Body>
void parallel_chunks(std::size_t count, Body&& body) {
  const auto chunks = static_cast<std::ptrdiff_t>(chunk_count(count));
  const int workers = static_cast<int>(std::min<std::ptrdiff_t>(worker_count(), chunks));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(chunks));
  auto run = [&](std::ptrdiff_t c) {
    const auto begin = static_cast<std::size_t>(c) * kChunkSize;
    try {
      body(begin, std::min(count, begin + kChunkSize), static_cast<std::size_t>(c));
    } catch (...) {
      failures[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::ptrdiff_t c = 0; c < chunks; ++c) run(c);
  } else {
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::ptrdiff_t c = 0; c < chunks; ++c) run(c);
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
}

/// Calls body(i) for every i in [0, count).
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  parallel_chunks(count, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

/// Deterministic reduction of `width` accumulators. body(begin, end, acc)
/// adds the contribution of [begin, end) into acc (zero-initialised).
template <class Body>
std::vector<double> parallel_sum(std::size_t count, std::size_t width, Body&& body) {
  const std::size_t chunks = chunk_count(count);
  std::vector<double> partial(chunks * width, 0.0);
  parallel_chunks(count, [&](std::size_t begin, std::size_t end, std::size_t c) {
    body(begin, end, partial.data() + c * width);
  });
  std::vector<double> total(width, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t k = 0; k < width; ++k) total[k] += partial[c * width + k];
  }
  return total;
}

}  // namespace jumpbsde
