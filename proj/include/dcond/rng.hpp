#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dcond {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective scrambler for 64-bit seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stage seed from a parent seed and a stage tag.
/// Used everywhere a run splits randomness between pipeline stages.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return mix64(parent ^ mix64(fnv1a64(tag)));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t counter) {
  return mix64(parent ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

}  // namespace dcond
