#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace csislab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named substream of a root seed. Every stage draws from its own stream so
// adding draws in one stage never shifts another.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ splitmix64(fnv1a64(name)));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return splitmix64(derive_seed(root, name) + splitmix64(index + 1));
}

inline Rng make_rng(std::uint64_t root, std::string_view name) { return Rng(derive_seed(root, name)); }

inline Rng make_rng(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return Rng(derive_seed(root, name, index));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform index in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

}  // namespace csislab
