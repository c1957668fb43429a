// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace radllama {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over bytes, then finalized. Used to key streams on strings.
constexpr std::uint64_t hash_bytes(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(h);
}

/// Counter-based SplitMix64 generator ("splitmix64-ctr").
///
/// The i-th draw of a stream is mix64(key + (i + 1) * gamma), where key is
/// derived from (seed, stream). Output depends only on the seed, the chain
/// of split keys and the draw index, never on platform or thread layout.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-ctr";

  explicit constexpr Rng(std::uint64_t seed = 0) noexcept
      : seed_(seed), key_(mix64(seed ^ kGoldenGamma)) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  /// Independent child stream. Does not advance this generator.
  constexpr Rng split(std::uint64_t stream_key) const noexcept {
    Rng child(seed_);
    child.key_ = mix64(key_ ^ mix64(stream_key + kGoldenGamma));
    return child;
  }
  Rng split(std::string_view name) const noexcept {
    return split(hash_bytes(name));
  }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Box-Muller; consumes exactly two draws.
  double normal(double mean, double stddev) noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n). n must be > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace radllama
