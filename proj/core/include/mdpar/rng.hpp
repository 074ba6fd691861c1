#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mdpar {

// Counter-based PRNG. The k-th draw from a given (seed, counter) state is a
// pure function of (seed, counter + k), so replaying a state reproduces the
// exact scalar stream regardless of platform or how the stream was split up.
// The mixing function is splitmix64 (Steele et al.), constants verbatim.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
};

inline std::uint64_t rng_next_u64(RngState& s) {
  std::uint64_t z = s.seed + (++s.counter) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Uniform in [0, 1), 53-bit resolution.
inline double rng_uniform01(RngState& s) {
  return static_cast<double>(rng_next_u64(s) >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection-free modulo is fine at desk scale;
// bias is < n / 2^64.
inline std::uint64_t rng_below(RngState& s, std::uint64_t n) {
  return rng_next_u64(s) % n;
}

// Standard normal via Box-Muller (cosine branch). Consumes two draws.
inline double rng_normal(RngState& s) {
  const double u1 =
      (static_cast<double>(rng_next_u64(s) >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
  const double u2 = static_cast<double>(rng_next_u64(s) >> 11) * 0x1.0p-53;
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x00000100000001B3ull;
  }
  return h;
}

// Derives an independent stream for a named purpose from a base seed.
inline RngState rng_derive(std::uint64_t base_seed, std::string_view tag) {
  RngState mixer{base_seed ^ fnv1a64(tag), 0};
  return RngState{rng_next_u64(mixer), 0};
}

}  // namespace mdpar
