#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace regime {

/// Reproducible random stream (xoshiro256++ state, splitmix64 seeding).
///
/// The library never uses std:: distributions: their output is
/// implementation-defined, and ensemble results must be bit-identical for a
/// given master seed no matter where they run. Substreams are pure functions
/// of (master seed, path index, tag), so parallel ensembles are independent
/// of worker count and scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) { seed_state(seed); }

  /// Stream for one Monte Carlo path. `tag` separates independent drivers
  /// of the same path (0 = regime chain, 1 = Brownian motion).
  static RandomStream substream(std::uint64_t master_seed,
                                std::uint64_t path_index,
                                std::uint64_t tag = 0) {
    std::uint64_t s = mix(master_seed);
    s = mix(s ^ mix(path_index + 0x9e3779b97f4a7c15ull));
    s = mix(s ^ mix(tag + 0xbf58476d1ce4e5b9ull));
    return RandomStream(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0,1]: 53 random bits, never exactly zero.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the pair's second value is cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  /// Exponential with the given rate (> 0).
  double next_exponential(double rate) { return -std::log(next_unit()) / rate; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  // splitmix64 finalizer; also used as the seeding mixer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  void seed_state(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : s_) {
      s += 0x9e3779b97f4a7c15ull;
      word = mix(s);
    }
  }

  std::uint64_t s_[4]{};
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace regime
