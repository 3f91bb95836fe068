#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace seldist {

/// SplitMix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed for the stream identified by (seed, purpose, a, b). Streams never share state,
/// so results do not depend on the order in which components draw numbers.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed ^ hash_string(purpose)) + a) ^ mix64(b + 0x632BE59BD9B4E019ULL));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                                   std::uint64_t b = 0) {
  return std::mt19937_64(derive_seed(seed, purpose, a, b));
}

namespace detail {
inline std::atomic<std::uint64_t>& global_seed_slot() {
  static std::atomic<std::uint64_t> seed{0};
  return seed;
}
}  // namespace detail

/// Sets the process-wide root seed used by components not given an explicit one.
inline void seed_everything(std::uint64_t seed) { detail::global_seed_slot().store(seed); }
inline std::uint64_t global_seed() { return detail::global_seed_slot().load(); }

/// Uniform double in [0,1) from the top 53 bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal via Box-Muller on uniform01 (library-independent).
inline double normal01(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

}  // namespace seldist
