#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cage2 {

using Rng = std::mt19937_64;

// SplitMix64 finalizer, used to turn (base, index) pairs into independent
// engine seeds.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic substream for a path such as {seed, iteration, episode, role}.
inline Rng derive_rng(std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = 0x243f6a8885a308d3ull;
  for (std::uint64_t p : path) s = mix_seed(s, p);
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace cage2
