#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dlm {

// FNV-1a, 64-bit. Used for config hashes, checkpoint checksums and feature
// hashing; must stay stable across platforms and releases.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

// SplitMix64 step; the standard way we derive independent seed streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic child seed from a parent seed and up to three stream tags.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = parent ^ 0x6a09e667f3bcc908ull;
  splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ull;
  splitmix64(s);
  s ^= b * 0xc2b2ae3d27d4eb4full;
  splitmix64(s);
  s ^= c * 0x165667b19e3779f9ull;
  return splitmix64(s);
}

}  // namespace dlm
