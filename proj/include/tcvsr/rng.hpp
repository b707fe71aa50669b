#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace tcvsr {

/// Seeded generator. Draw functions are implemented here rather than through
/// <random> distributions so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);
  double normal();
  bool coin() { return (engine_() >> 63) != 0; }

  /// Textual engine state, restorable with restore().
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace tcvsr
