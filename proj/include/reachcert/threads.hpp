#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace reachcert {

/// Parallelism cap: REACHCERT_THREADS if set, hardware concurrency otherwise.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("REACHCERT_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Runs fn(chunk_index) for chunk_index in [0, chunks); result aggregation is
/// the caller's business and must be order-independent.
template <typename Fn>
void parallel_chunks(std::uint64_t chunks, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = thread_cap();
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(chunks, 1)));
  if (threads <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::uint64_t> next{0};
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::uint64_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) fn(c);
    });
  for (auto& th : pool) th.join();
}

}  // namespace reachcert
