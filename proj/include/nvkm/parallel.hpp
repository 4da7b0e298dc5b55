#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace nvkm {

// Runs fn(task_index) for task_index in [0, n_tasks). The task decomposition
// is fixed, so any reduction done in task order is deterministic regardless
// of thread count or scheduling. The lowest-indexed task exception, if any,
// is rethrown after all workers join.
inline void parallel_for_tasks(std::size_t n_tasks, const std::function<void(std::size_t)>& fn,
                               unsigned max_threads = 0) {
  if (n_tasks == 0) return;
  unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(hw, n_tasks));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n_tasks);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (unsigned w = 0; w < n_threads; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n_tasks; i += n_threads) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace nvkm
