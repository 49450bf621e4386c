#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sdfrecon {

// Filesystem-level failures (missing files, short writes).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally broken inputs (bad magic, truncated records, schema misuse).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG stream. std::mt19937_64 has a standardized sequence, but
// the std distributions do not, so the uniform/normal mappings live here.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  // Independent substream (seed mixed with stream ids via splitmix64).
  static RngStream substream(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return RngStream(derive(seed, a, b));
  }

  static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return mix(mix(mix(seed) ^ a) ^ b);
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n == 0");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do { x = engine_(); } while (x >= limit);
    return x % n;
  }

  // Marsaglia polar method; cached second deviate.
  double normal() {
    if (has_cache_) { has_cache_ = false; return cache_; }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    cache_ = v * m;
    has_cache_ = true;
    return u * m;
  }

 private:
  static uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

// Global worker cap for parallel_chunks. 0 = use hardware_concurrency.
int& worker_cap();
void set_worker_cap(int n);
int effective_workers();

// Runs fn(i) for i in [0, n) split into contiguous chunks across threads.
// Chunk boundaries depend only on n and the worker count, and callers reduce
// per-chunk results in index order, so outputs are reproducible.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace sdfrecon
