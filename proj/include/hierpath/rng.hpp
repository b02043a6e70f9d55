// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace hierpath {

/// SplitMix64 stream. Every random decision in the toolkit goes through this
/// generator with the helpers below, so sequences are identical on every
/// platform (std:: distributions are implementation-defined and are not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [-limit, limit).
  double symmetric(double limit) { return (2.0 * uniform() - 1.0) * limit; }

  /// Unbiased integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream for a named sub-task.
  Rng derive(std::uint64_t tag) const {
    Rng mix(seed_ ^ (tag * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    return Rng(mix.next());
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// Fisher-Yates from the back, using Rng::below.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace hierpath
