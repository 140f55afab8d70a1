#pragma once

#include <cstdint>
#include <limits>

namespace qcd {

// SplitMix64 finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator so it plugs into
/// the <random> distributions.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& w : s_) {
      w = mix64(z);
      z += 0x9e3779b97f4a7c15ULL;
    }
  }

  Xoshiro256(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) noexcept
      : s_{a, b, c, d} {
    if ((a | b | c | d) == 0) s_[0] = 1;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

/// Independent stream for trial `index` under `master_seed`. (master, index)
/// is recoverable from the first two state words, so distinct pairs never
/// share a starting state; every word depends on both keys.
inline Xoshiro256 stream_rng(std::uint64_t master_seed, std::uint64_t index) noexcept {
  const std::uint64_t a = mix64(master_seed);
  const std::uint64_t b = mix64(index ^ a);
  Xoshiro256 rng(a, b, mix64(a ^ 0x5851f42d4c957f2dULL) ^ b, mix64(b ^ 0x14057b7ef767814fULL) ^ a);
  for (int i = 0; i < 8; ++i) rng();
  return rng;
}

// Derive a sub-seed so that different estimation tasks under one master seed
// draw from disjoint stream families.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t tag) noexcept {
  return mix64(master_seed ^ mix64(tag));
}

}  // namespace qcd
