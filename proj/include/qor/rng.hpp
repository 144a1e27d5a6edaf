// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>

namespace qor {

// Counter-based pseudo-random generator: draw i of a stream seeded with s is
// splitmix64(s + i * GAMMA). Pure integer arithmetic plus IEEE-754 double
// division, so streams are reproducible across platforms and independent of
// thread count. Sub-streams are derived with fork(), which remixes the seed
// with a tag; see README "Randomness" for the consumption order used by
// training runs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return mix(seed_ + (++counter_) * kGamma); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; consumes two draws per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Avoid log(0).
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n) by rejection.
  uint64_t next_below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Derive an independent stream identified by `tag`.
  Rng fork(uint64_t tag) const { return Rng(mix(seed_ ^ mix(tag + kGamma))); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  uint64_t seed() const { return seed_; }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  uint64_t seed_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qor
