#pragma once

#include <cstdint>
#include <random>

namespace fr3e {

/**
 * Deterministic random source.
 *
 * Wraps std::mt19937_64 but performs all value construction itself: the
 * std::uniform_*_distribution adaptors are implementation-defined, so two
 * standard libraries fed the same engine state can disagree.  Every draw
 * here is a fixed function of the raw engine output, which keeps training
 * runs reproducible bit for bit.
 */
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).  n must be positive.
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_range(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fr3e
