#pragma once

#include <cstdint>
#include <random>

namespace godial {

using Rng = std::mt19937_64;

// splitmix64 finalizer, used to derive independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(base) ^ stream) ^ index);
}

// Named streams so that arms of an experiment can share or separate randomness explicitly.
namespace stream {
inline constexpr std::uint64_t kKb = 1;
inline constexpr std::uint64_t kTrainGoals = 2;
inline constexpr std::uint64_t kTestGoals = 3;
inline constexpr std::uint64_t kNetInit = 4;
inline constexpr std::uint64_t kAgent = 5;
inline constexpr std::uint64_t kUser = 6;
inline constexpr std::uint64_t kGoalOrder = 7;
inline constexpr std::uint64_t kEval = 8;
inline constexpr std::uint64_t kWarmStart = 9;
inline constexpr std::uint64_t kPortion = 10;
inline constexpr std::uint64_t kSource = 11;
}  // namespace stream

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace godial
