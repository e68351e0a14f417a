#pragma once
// Per-cluster parallel evaluation with an order-fixed pairwise reduction.
//
// Results are stored by cluster index and then summed along a fixed binary
// tree, so totals are bit-identical regardless of the worker count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace wscl {

/// Worker count from WSCL_THREADS (default 1).
inline int worker_count() {
  if (const char* env = std::getenv("WSCL_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return std::min(n, 256);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

template <class T, class Fn>
std::vector<T> parallel_map(int count, Fn&& fn, int workers = worker_count()) {
  std::vector<T> out(static_cast<std::size_t>(std::max(count, 0)));
  workers = std::clamp(workers, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// Pairwise sum over [begin, end) in a fixed tree order. `zero` seeds empty ranges.
template <class T>
T tree_sum(const std::vector<T>& items, const T& zero) {
  if (items.empty()) return zero;
  std::vector<T> level(items);
  while (level.size() > 1) {
    std::vector<T> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(level[i] + level[i + 1]);
    if (level.size() % 2 == 1) next.push_back(level.back());
    level.swap(next);
  }
  return level.front();
}

}  // namespace wscl
