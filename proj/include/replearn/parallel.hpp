#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace replearn {

// Worker count: REPLEARN_THREADS when set to a positive integer, otherwise the
// number of logical cores.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("REPLEARN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1u;
}

// Calls fn(i) for i in [0, count). Work items are claimed dynamically, so fn
// must write its result into a slot owned by i; callers aggregate afterwards in
// index order, which keeps every output independent of the schedule. The first
// exception thrown by any item is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned threads = thread_budget()) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace replearn
