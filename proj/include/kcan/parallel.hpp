#pragma once
// Deterministic work distribution: fixed-size chunks, each writing only its
// own state, merged serially in chunk order afterwards. Results are therefore
// bit-identical for any thread count.

#include <functional>
#include <thread>
#include <vector>

namespace kcan {

constexpr int kChunkSize = 16;  // samples per reduction chunk

inline int resolve_threads(int configured) {
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(c) for every chunk index c in [0, chunk_count), round-robin across
// threads. fn must only touch chunk-owned state.
inline void run_chunks(int chunk_count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || chunk_count <= 1) {
    for (int c = 0; c < chunk_count; ++c) fn(c);
    return;
  }
  const int workers = std::min(threads, chunk_count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([w, workers, chunk_count, &fn] {
      for (int c = w; c < chunk_count; c += workers) fn(c);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace kcan
