#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace aeflow {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Stateless: the
/// output is a pure function of (counter, key), so any stream can be generated in any
/// order or in parallel.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(Counter c, Key k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Uniform double in (0, 1) from 64 random bits (53-bit mantissa, never 0).
inline double uniform_open01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Two independent standard normals keyed by (seed, a, b, stream).
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t a, std::uint32_t b,
                                         std::uint32_t stream = 0) {
  const auto out = Philox4x32::generate(
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, stream},
      Philox4x32::key_from_seed(seed));
  const double u1 = uniform_open01(out[0], out[1]);
  const double u2 = uniform_open01(out[2], out[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

/// Two independent uniforms in (0,1) keyed by (seed, a, b, stream).
inline std::array<double, 2> uniform_pair(std::uint64_t seed, std::uint64_t a, std::uint32_t b,
                                          std::uint32_t stream) {
  const auto out = Philox4x32::generate(
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, stream},
      Philox4x32::key_from_seed(seed));
  return {uniform_open01(out[0], out[1]), uniform_open01(out[2], out[3])};
}

/// SplitMix64 finaliser; derives independent child seeds from (seed, stream).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace aeflow
