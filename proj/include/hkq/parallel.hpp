#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace hkq {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Splits [0, n) into fixed-size blocks and runs `work(block, begin, end)` on a
/// pool. Blocks are claimed dynamically but identified by index, so callers
/// that store per-block partials and combine them in block order get results
/// independent of the thread count.
inline void parallel_blocks(std::size_t n, std::size_t block_size, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& work) {
  if (n == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t n_blocks = (n + block_size - 1) / block_size;
  const int nt = std::min<std::size_t>(resolve_threads(threads), n_blocks);
  if (nt <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b)
      work(b, b * block_size, std::min(n, (b + 1) * block_size));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto runner = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      work(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int i = 0; i < nt; ++i) pool.emplace_back(runner);
  for (auto& th : pool) th.join();
}

/// Compensated (Kahan) accumulator for the block-ordered reductions.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }

  double value() const { return sum; }
};

}  // namespace hkq
