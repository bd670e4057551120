#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mvpibp {

// worker count: MVPIBP_THREADS env var caps hardware_concurrency
inline int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("MVPIBP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Tasks must only write to disjoint slots and
// draw randomness from sub-streams keyed by i, so scheduling never changes
// the result.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int max_threads = 0) {
  int nw = worker_count();
  if (max_threads > 0) nw = std::min(nw, max_threads);
  if (nw <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nw);
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  for (int t = 0; t < nw; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace mvpibp
