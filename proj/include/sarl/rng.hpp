#pragma once

#include <cstdint>
#include <random>

namespace sarl {

// splitmix64 finalizer. Used both as a stateless hash and as the step of the
// seed-derivation stream.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

// Maps 64 random bits to [0, 1) using the top 53 bits. Independent of the
// standard library's distribution implementations, so results are portable.
constexpr double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform01(std::mt19937_64& eng) { return unit_double(eng()); }

// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(std::mt19937_64& eng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(eng) * static_cast<double>(n)) % n;
}

// Per-component seeds derived from one master seed. Each component gets
// mix64(master + k * golden) for a fixed k, so adding a component never
// shifts the others.
enum class SeedStream : std::uint64_t {
  LevelGen = 1,
  Init = 2,
  Rollout = 3,
  Spawner = 4,
  SafeInit = 5,
  SafeRollout = 6,
  SafeLevelGen = 7,
  Eval = 8,
  Minibatch = 9,
  SafeMinibatch = 10,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream) {
  return mix64(master + static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ULL);
}

}  // namespace sarl
