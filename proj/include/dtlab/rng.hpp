#ifndef DTLAB_RNG_HPP_
#define DTLAB_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace dtlab {

// SplitMix64. The output sequence is a pure function of (seed, draw index),
// so streams are reproducible across platforms and implementations.
// Gaussians use basic Box-Muller (two uniforms per draw, no caching) to keep
// the stream consumption fixed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  // Uniform in {0, ..., n-1}, rejection sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Independent substream: hashes (seed, stream) into a fresh initial state.
  static SplitMix64 substream(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 mixer(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return SplitMix64(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

// Seeded Fisher-Yates.
template <typename T>
void shuffle_in_place(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace dtlab

#endif  // DTLAB_RNG_HPP_
