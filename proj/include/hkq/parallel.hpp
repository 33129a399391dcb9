#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace hkq {

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Work items must be independent and write only
// to their own output slots; results are then identical for any thread count.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const unsigned used = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  pool.reserve(used);
  for (unsigned t = 0; t < used; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += used) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hkq
