#pragma once

#include <cstdint>
#include <vector>

namespace flap {

// Deterministic counter-based generator (SplitMix64): the state advances by a
// fixed odd gamma and each output is a finalizing mix of the counter. Every
// random decision in the project flows from one of these streams so that a
// single config seed fixes the full trajectory.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // [0, n) by multiply-shift; bias is < n / 2^64 and fully deterministic.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  double normal(double mean = 0.0, double stddev = 1.0);

  // Derives an independent child stream; the parent advances by one draw.
  Rng split() { return Rng(next_u64()); }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<size_t> permutation(size_t n);

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flap
