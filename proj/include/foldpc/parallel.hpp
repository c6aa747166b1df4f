// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace foldpc {

/// Thread budget for the numeric kernels. Results never depend on it: work is
/// split into chunks whose boundaries are fixed by the problem size alone and
/// every reduction runs over chunks in index order.
struct Execution {
  unsigned threads = 1;
};

/// Fixed work granularity; independent of the thread count.
inline constexpr std::size_t kChunkSize = 64;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunkSize - 1) / kChunkSize; }

namespace detail {

/// Runs task(0..count-1) on up to `threads` workers; the first exception is
/// rethrown after all workers have joined.
template <typename Task>
void run_pool(std::size_t count, unsigned threads, Task&& task) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::size_t c = 0; c < count; ++c) task(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < count; c = next++) {
          try {
            task(c);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// Calls fn(chunk, begin, end) for every chunk of [0, n). Chunks are claimed
/// dynamically but each one writes only to its own output slot.
template <typename Fn>
void parallel_chunks(std::size_t n, const Execution& exec, Fn&& fn) {
  detail::run_pool(chunk_count(n), exec.threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunkSize;
    fn(c, begin, std::min(n, begin + kChunkSize));
  });
}

/// One task per index, for coarse independent jobs such as whole patches.
template <typename Fn>
void parallel_tasks(std::size_t n, const Execution& exec, Fn&& fn) {
  detail::run_pool(n, exec.threads, fn);
}

/// Element-wise map over [0, n) in parallel; fn(i) must only touch slot i.
template <typename Fn>
void parallel_for(std::size_t n, const Execution& exec, Fn&& fn) {
  parallel_chunks(n, exec, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace foldpc
