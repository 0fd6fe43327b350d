#pragma once

#include <cstdint>
#include <random>

namespace poolamp {

/// Role tags used to derive independent random streams from one master seed.
enum class StreamRole : std::uint64_t {
  Design = 1,
  Signal = 2,
  Noise = 3,
  Init = 4,
  Quad = 5,
};

namespace detail {

// SplitMix64 finalizer; good avalanche for combining key material.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derive a stream key from (master seed, trial index, role). Distinct
/// inputs give statistically independent mt19937_64 streams, so trials can
/// be generated in any order or in parallel and still be replayable.
inline std::uint64_t stream_key(std::uint64_t master_seed, std::uint64_t trial,
                                StreamRole role) {
  std::uint64_t h = detail::splitmix64(master_seed);
  h = detail::splitmix64(h ^ trial);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(role));
  return h;
}

/// Seeded generator for one (seed, trial, role) stream.
inline std::mt19937_64 make_rng(std::uint64_t master_seed, std::uint64_t trial,
                                StreamRole role) {
  return std::mt19937_64(stream_key(master_seed, trial, role));
}

}  // namespace poolamp
