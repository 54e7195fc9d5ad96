#pragma once

#include <cstdint>
#include <random>

namespace gmix {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for substream `stream` of a run seeded with `seed`. Substreams let
/// per-draw and per-replicate work run in any order, on any thread, and still
/// produce identical results.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose = 0) {
  return mix64(mix64(seed ^ mix64(purpose + 0x5851f42d4c957f2dULL)) + stream);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t purpose = 0) {
  return Rng(substream_seed(seed, stream, purpose));
}

/// Uniform on [0, 1) with 53 random bits; independent of libstdc++'s
/// generate_canonical so draws are stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace gmix
