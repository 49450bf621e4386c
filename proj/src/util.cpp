#include "sdfrecon/util.hpp"

#include <algorithm>
#include <cstdlib>

namespace sdfrecon {

int& worker_cap() {
  static int cap = [] {
    if (const char* env = std::getenv("SDFRECON_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    return 0;
  }();
  return cap;
}

void set_worker_cap(int n) { worker_cap() = n; }

int effective_workers() {
  int cap = worker_cap();
  if (cap > 0) return cap;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = std::min<std::size_t>(effective_workers(), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sdfrecon
