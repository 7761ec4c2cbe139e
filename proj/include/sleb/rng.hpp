#pragma once

#include <cstdint>

#include "sleb/error.hpp"

namespace sleb {

// xoshiro256** seeded through splitmix64. Self-contained so seeded runs
// reproduce bit-for-bit across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) {
      word = splitmix64(x);
    }
  }

  uint64_t next() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [lo, hi) with 24 bits of resolution.
  float uniform(float lo, float hi) {
    const float u = static_cast<float>(next() >> 40) * 0x1.0p-24f;
    return lo + u * (hi - lo);
  }

  // Unbiased integer in [0, n); rejection sampling.
  uint64_t index(uint64_t n) {
    if (n == 0) {
      throw ValueError("Rng::index: n must be positive");
    }
    const uint64_t threshold = (~uint64_t{0} - n + 1) % n;  // 2^64 mod n
    uint64_t r = next();
    while (r < threshold) {
      r = next();
    }
    return r % n;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_[4];
};

}  // namespace sleb
