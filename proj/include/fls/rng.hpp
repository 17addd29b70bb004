#pragma once

#include <cstdint>
#include <random>

namespace fls {

/// Seeded generator with distribution arithmetic done here rather than in
/// <random> distributions, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Independent child stream for sub-task `index`.
  Rng fork(std::uint64_t index) {
    return Rng(engine_() ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fls
