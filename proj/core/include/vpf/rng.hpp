#pragma once

#include <cstdint>

namespace vpf {

/// Deterministic 64-bit generator (splitmix64). The sequence is part of the
/// library contract: outputs are stable across platforms and versions, which
/// keeps seeded pipelines byte-reproducible. `split` derives an independent
/// child stream so per-frame / per-proposal work can draw concurrently
/// without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be > 0. Uses 64-bit modulo; the bias
  /// is negligible for the small n used here.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// Independent child stream identified by `stream`. Children of the same
  /// parent with distinct ids never share a sequence.
  Rng split(std::uint64_t stream) const {
    std::uint64_t z = state_ + 0x9E3779B97F4A7C15ull * (2 * stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t state_;
};

}  // namespace vpf
