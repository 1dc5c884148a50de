#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace featmetric {

// Worker cap: FEATMETRIC_THREADS env var, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("FEATMETRIC_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn over contiguous row ranges [begin,end). Each range is written by
// exactly one worker, so outputs are identical for any worker count as long
// as fn touches only its own rows. Reductions must be combined by the caller
// in row order after this returns.
inline void parallel_rows(int rows, const std::function<void(int, int)>& fn) {
  int workers = std::min(worker_count(), std::max(rows, 1));
  if (workers <= 1 || rows <= 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  int chunk = (rows + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int begin = w * chunk;
    int end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace featmetric
