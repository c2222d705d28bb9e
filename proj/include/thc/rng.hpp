#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

#include "thc/error.hpp"

namespace thc {

/// Independent random streams derived from one user seed.
enum class Stream : std::uint64_t {
  potential = 1,
  phases = 2,
  rows = 3,
  pairs = 4,
  test = 99,
};

/// Counter-based generator built on the SplitMix64 finalizer.
///
/// Draw k of a stream is a pure function of (seed, stream, k). Unlike the
/// std:: distributions, the uniform, integer and normal draws below are
/// specified here exactly, so a seed reproduces the same numbers with any
/// standard library.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream) noexcept
      : key_(mix(seed ^ mix(static_cast<std::uint64_t>(stream) * kGolden))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t at(std::uint64_t k) const noexcept { return mix(key_ + (k + 1) * kGolden); }

  std::uint64_t next() noexcept { return at(counter_++); }

  std::uint64_t position() const noexcept { return counter_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const unsigned __int128 product = static_cast<unsigned __int128>(next()) * bound;
      if (static_cast<std::uint64_t>(product) >= threshold)
        return static_cast<std::uint64_t>(product >> 64);
    }
  }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// `count` distinct indices from [0, population), returned in ascending order.
/// Partial Fisher-Yates, so the draw sequence is fixed by (rng, population, count).
inline std::vector<std::int64_t> sample_without_replacement(CounterRng& rng, std::int64_t population,
                                                            std::int64_t count) {
  detail::require(count >= 0 && count <= population,
                  "sample_without_replacement: count must lie in [0, population]");
  std::vector<std::int64_t> pool(static_cast<std::size_t>(population));
  std::iota(pool.begin(), pool.end(), std::int64_t{0});
  for (std::int64_t k = 0; k < count; ++k) {
    const auto pick = k + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(population - k)));
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace thc
