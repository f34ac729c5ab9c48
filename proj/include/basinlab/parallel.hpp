#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace basinlab {

// Worker count: BASINLAB_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
unsigned worker_count();

// Runs fn(i) for i in [0, n) on the worker pool. The first exception thrown
// by any job is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Results in index order regardless of which worker produced them.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace basinlab
