#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace toc {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
// exception stops further items from starting and is rethrown after all
// threads have joined.
template <typename Fn>
void parallel_for_each(std::size_t n, int workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr first;
  std::mutex mu;

  auto body = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        abort = true;
      }
    }
  };

  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || n <= 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(std::min(count, n));
    for (std::size_t t = 0; t < std::min(count, n); ++t) pool.emplace_back(body);
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace toc
