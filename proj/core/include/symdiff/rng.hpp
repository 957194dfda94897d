#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace symdiff {

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for substream `stream` of `seed`. Chained for nested streams:
/// derive_seed(derive_seed(seed, a), b).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Counter-based uniform draw in [0, 1): a pure function of its arguments,
/// so results do not depend on evaluation order or thread assignment.
inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t bits = mix64(derive_seed(derive_seed(seed, a), b));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based standard normal (Box-Muller on two counter uniforms).
inline double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t s = derive_seed(seed, a);
  const double u1 = 1.0 - counter_uniform(s, b, 0);
  const double u2 = counter_uniform(s, b, 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

}  // namespace symdiff
