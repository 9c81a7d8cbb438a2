#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gaudit {

// Runs fn(task) for task in [0, n_tasks) on up to `threads` workers. Tasks are
// claimed dynamically; callers must make each task write only its own output
// slot so results do not depend on scheduling. The first exception thrown by
// any task is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n_tasks, int threads, Fn&& fn) {
  const auto workers =
      static_cast<std::size_t>(std::max(1, threads)) < n_tasks ? static_cast<std::size_t>(std::max(1, threads)) : n_tasks;
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) return;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_tasks);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gaudit
