#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace srhm {

// Counter-based splittable generator. Draw j of stream `key` is mix(key, j),
// and child streams are derived by hashing a tag into the key. Expanding a
// derivation tree therefore consumes the same numbers for the same node no
// matter in which order (or on how many threads) the nodes are visited.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed, 0x7c15b1e2a4f09d3bull)) {}

  Rng split(uint64_t tag) const { return Rng(mix(key_, tag), 0); }
  Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

  uint64_t next_u64() { return mix(key_, ++counter_); }

  // uniform in [0, 1), 53 bit mantissa
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [0, n), unbiased via rejection
  uint64_t uniform_int(uint64_t n) {
    uint64_t rem = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
    for (;;) {
      uint64_t x = next_u64();
      if (rem == 0 || x <= UINT64_MAX - rem) return x % n;
    }
  }

  // standard normal, Box-Muller (cosine branch only)
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= uint8_t(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  Rng(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}

  // splitmix64 finalizer over a keyed counter
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace srhm
