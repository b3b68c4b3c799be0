#pragma once

#include <cstdint>
#include <random>

namespace mpbetti {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` under `master`. Replication j always gets the same
/// stream no matter which worker runs it or in which order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Stream tags used to split one seed into independent sub-streams.
enum class Stream : std::uint64_t {
  positions = 1,
  marks = 2,
  calibration = 3,
  test = 4,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream s) noexcept {
  return derive_seed(master, static_cast<std::uint64_t>(s) * 0x100000001b3ULL);
}

}  // namespace mpbetti
