// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

namespace idim {

// splitmix64 output function.
constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives the seed of sub-stream `stream` from `seed`:
//   mix(seed, k) = finalize(seed ^ finalize(k + golden))
// Used for per-block projection randomness, per-layer init, per-run seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64_finalize(seed ^ splitmix64_finalize(stream + 0x9E3779B97F4A7C15ULL));
}

/// Portable splitmix64 generator. Every distribution below is defined
/// bit-for-bit here (no <random> distributions), so streams agree across
/// platforms and standard libraries.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64_finalize(state_);
  }

  // High 53 bits, in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // In (0, 1].
  double uniform_open_closed() noexcept { return 1.0 - uniform(); }

  // Box-Muller, cosine branch only: z = sqrt(-2 ln u1) cos(2 pi u2).
  double normal() noexcept {
    const double u1 = uniform_open_closed();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t bounded(std::uint64_t bound) noexcept {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % bound;
  }

  // +1 or -1 with equal probability (top bit).
  double sign() noexcept { return (next_u64() >> 63) ? -1.0 : 1.0; }

  // Fisher-Yates, high index to low.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace idim
