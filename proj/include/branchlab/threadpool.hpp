#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace branchlab {

// Runs fn(block_index) for block_index in [0, blocks) on up to `threads`
// workers. Blocks are claimed from a shared counter; determinism of results
// is the caller's job (index everything by block, fold in order).
inline void parallel_blocks(long blocks, int threads, const std::function<void(long)>& fn) {
  if (threads <= 1 || blocks <= 1) {
    for (long b = 0; b < blocks; ++b) fn(b);
    return;
  }
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const long b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        fn(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nw = static_cast<int>(std::min<long>(threads, blocks));
  pool.reserve(nw);
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace branchlab
