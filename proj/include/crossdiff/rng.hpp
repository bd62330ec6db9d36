#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace crossdiff {

/// Counter-based generator: the i-th output of a stream is
/// splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15). Streams are split by
/// deriving a fresh key from (parent key, purpose label, index), so every
/// consumer gets an independent, platform-independent sequence regardless of
/// call order or thread count.
///
/// Normals use the Box-Muller transform on two consecutive uniforms; both
/// outputs of a pair are used (cos branch first).
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : key_(mix(seed ^ 0x6A09E667F3BCC908ULL)) {}

  /// Independent child stream for `purpose` (e.g. "init", "split", "noise").
  CounterRng stream(std::string_view purpose, uint64_t index = 0) const;

  uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  /// Uniform in (0, 1]; safe for log().
  double uniform_open0();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n) by rejection; n > 0.
  uint64_t below(uint64_t n);
  double normal();
  void fill_normal(std::span<double> out);

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

  static uint64_t mix(uint64_t z);

 private:
  struct Raw {};
  CounterRng(uint64_t key, Raw) : key_(key) {}

  uint64_t key_;
  uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace crossdiff
