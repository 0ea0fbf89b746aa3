#pragma once

#include <cmath>
#include <cstdint>

// All randomness in this project flows through the two primitives below, so
// every artifact is reproducible from a 64-bit seed:
//
//   mix64        - the splitmix64 finalizer (Steele/Lea/Flood).
//   counter_hash - a keyed hash of (seed, a, b, c); used wherever draws must
//                  be addressable by coordinates instead of by sequence
//                  position, e.g. the per-(frame, key) feature noise.
//
// Uniform doubles take the top 53 bits of a word; gaussians are plain
// Box-Muller on two words with no spare caching. Bounded integers use the
// Lemire multiply-shift. Keep these formulas stable: trace files and
// checkpoints created under them are only reproducible as long as they hold.

namespace keysched {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr uint64_t counter_hash(uint64_t seed, uint64_t a, uint64_t b,
                                uint64_t c) {
  uint64_t h = mix64(seed + kGolden);
  h = mix64(h ^ (a + kGolden));
  h = mix64(h ^ (b + kGolden));
  h = mix64(h ^ (c + kGolden));
  return h;
}

// Word -> [0, 1)
inline double u01(uint64_t w) { return static_cast<double>(w >> 11) * 0x1.0p-53; }

// Word -> (0, 1]; safe as a log() argument.
inline double u01_open(uint64_t w) {
  return static_cast<double>((w >> 11) + 1) * 0x1.0p-53;
}

inline double gauss_from_words(uint64_t w1, uint64_t w2) {
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u01_open(w1))) * std::cos(two_pi * u01(w2));
}

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }

  double next_u01() { return u01(next()); }

  double next_gauss() {
    const uint64_t w1 = next();
    const uint64_t w2 = next();
    return gauss_from_words(w1, w2);
  }

  // Uniform integer in [0, n), n >= 1.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next()) * n) >> 64);
  }

 private:
  uint64_t state_;
};

}  // namespace keysched
