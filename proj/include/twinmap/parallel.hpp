#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace twinmap {

/// Worker count: TWINMAP_THREADS if set and positive, else hardware
/// concurrency, else 1.
inline int max_threads() {
  if (const char* env = std::getenv("TWINMAP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Runs fn(i) for every i in [0, n), possibly across threads. Each index must
/// write only to its own output slot; under that discipline the result is
/// independent of the thread count, so runs are reproducible with any
/// TWINMAP_THREADS setting. Work is handed out through a shared counter.
/// The first exception thrown by fn is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  const int threads =
      static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(max_threads())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace twinmap
