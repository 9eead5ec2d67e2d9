#pragma once

// Seed management. Every random quantity in the library is drawn from a
// std::mt19937_64 engine whose seed is derived with the SplitMix64 finalizer
// from a base seed plus a list of integer tags (trial, grid index, purpose).
// Distributions come from Boost.Random so streams are identical across
// standard library implementations.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mcvd {

using Engine = std::mt19937_64;

inline constexpr const char* kRngAlgorithm = "mt19937_64+splitmix64";

/// Independent streams carved out of one run seed.
enum class StreamPurpose : std::uint64_t {
  kBits = 1,
  kNoise = 2,
  kCalibration = 3,
  kCalibrationNoise = 4,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a base seed and tags.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Engine make_engine(std::uint64_t seed, StreamPurpose purpose) {
  return Engine(derive_seed(seed, {static_cast<std::uint64_t>(purpose)}));
}

}  // namespace mcvd
