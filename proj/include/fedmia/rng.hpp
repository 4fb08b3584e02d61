#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fedmia {

// splitmix64 mixing step, the basis of all seed derivation in this project.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t kSeedSalt = 0x5eedf00d5eedf00dULL;

// Stable seed derivation: every subsystem stream is derived from the master
// seed, a domain name, and optional indices as
//
//   h = splitmix64(master ^ kSeedSalt)
//   h = splitmix64(h ^ byte)   for each byte of `domain`
//   h = splitmix64(h ^ index)  for each index
//
// Recorded runs depend on this exact chain; do not change it.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view domain,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = splitmix64(master ^ kSeedSalt);
  for (char c : domain) h = splitmix64(h ^ static_cast<unsigned char>(c));
  for (std::uint64_t i : indices) h = splitmix64(h ^ i);
  return h;
}

// Deterministic RNG. std::mt19937_64 output is pinned by the standard; the
// distributions below replace the implementation-defined std::*_distribution
// algorithms so a seed produces the same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, bound); bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t excess = (0 - bound) % bound;  // 2^64 mod bound
    std::uint64_t x = next_u64();
    while (x < excess) x = next_u64();
    return x % bound;
  }

  // 53-bit uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedmia
