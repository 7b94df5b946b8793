#pragma once

#include <cstdint>

namespace rmipn {

// Deterministic splitmix64 generator. The standard library engines are
// reproducible but the distributions are not, so uniforms are derived
// directly from the raw bits to keep every artifact byte-stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Derive an independent stream, e.g. for per-pixel noise.
  Rng fork() { return Rng(next_u64()); }

 private:
  uint64_t state_;
};

}  // namespace rmipn
