#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace follmer {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{1};
  return threads;
}
}  // namespace detail

/// Worker count used by every path-parallel loop. Results never depend on it.
inline void set_thread_count(int n) { detail::thread_setting().store(std::max(1, n)); }
inline int thread_count() { return detail::thread_setting().load(); }

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; callers write into per-index slots and aggregate
/// afterwards in index order.
template <typename Body>
void parallel_for(Eigen::Index n, Body&& body) {
  const Eigen::Index workers = std::min<Eigen::Index>(thread_count(), std::max<Eigen::Index>(n, 1));
  if (workers <= 1) {
    body(Eigen::Index{0}, n);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (Eigen::Index w = 0; w < workers; ++w) {
    const Eigen::Index begin = w * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace follmer
