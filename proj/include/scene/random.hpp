#pragma once

// Portable seeded randomness. std:: distributions are implementation-defined,
// so draws are built directly on splitmix64 to keep outputs identical across
// standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace scene {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Combine a run seed with string keys. Each key is length-prefixed so
// ("ab","c") and ("a","bc") differ.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t run_seed, const Keys&... keys) noexcept {
  std::uint64_t h = splitmix64(run_seed);
  auto mix = [&h](std::string_view k) {
    h = splitmix64(h ^ fnv1a64(k) ^ (static_cast<std::uint64_t>(k.size()) << 56));
  };
  (mix(std::string_view(keys)), ...);
  return h;
}

constexpr std::uint64_t derive_seed_index(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n), rejection sampled to avoid modulo bias. n > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  // Uniform in (0, 1).
  double unit_open() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; one draw per call, no cached pair.
  double normal() noexcept {
    const double u1 = unit_open();
    const double u2 = unit_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace scene
