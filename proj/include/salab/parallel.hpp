#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace salab {

// Worker count: explicit request wins, then SA_LAB_THREADS, then hardware.
// 0 means auto.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SA_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n) split contiguously over workers. Results must be
// written to disjoint, preallocated slots; the caller performs any
// order-sensitive reduction afterwards.
inline void parallel_for(long n, int n_threads, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  const int workers = std::min<long>(std::max(1, n_threads), n);
  if (workers == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const long base = n / workers;
  const long rem = n % workers;
  long begin = 0;
  for (int w = 0; w < workers; ++w) {
    const long count = base + (w < rem ? 1 : 0);
    const long end = begin + count;
    pool.emplace_back([begin, end, &fn] {
      for (long i = begin; i < end; ++i) fn(i);
    });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

}  // namespace salab
