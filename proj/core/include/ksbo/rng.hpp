#pragma once

#include <cmath>
#include <cstdint>

namespace ksbo {

// splitmix64 step; used for seeding and for deriving independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives a child seed from (seed, tag); chains for nested scopes
// (run -> iteration -> candidate). Two splitmix rounds decorrelate
// neighbouring tags.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed + 0x632be59bd9b4e019ull * (tag + 1);
  std::uint64_t a = splitmix64(s);
  return a ^ splitmix64(s);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t t1, std::uint64_t t2) {
  return mix_seed(mix_seed(seed, t1), t2);
}

// xoshiro256++ with explicit uniform/normal converters.  Keeping the whole
// generator in-repo pins the stream bit-for-bit across platforms and
// standard-library versions; every stochastic routine takes one of these
// seeded from the run seed, so reruns reproduce byte-identical results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
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

  // Uniform on [0, 1): top 53 bits scaled by 2^-53.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on {0, ..., n-1} via 128-bit multiply (no modulo bias worth
  // rejecting at the sizes used here).
  std::int64_t uniform_index(std::int64_t n) {
    return static_cast<std::int64_t>(
        (static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable tags for deriving per-purpose streams from a run seed.
namespace seed_tag {
inline constexpr std::uint64_t kInitDesign = 0x01;
inline constexpr std::uint64_t kNoise = 0x02;
inline constexpr std::uint64_t kIteration = 0x03;
inline constexpr std::uint64_t kEnsemble = 0x04;
inline constexpr std::uint64_t kCentral = 0x05;
inline constexpr std::uint64_t kNondominated = 0x06;
inline constexpr std::uint64_t kAux = 0x07;
inline constexpr std::uint64_t kXLarge = 0x08;
inline constexpr std::uint64_t kRandomSearch = 0x09;
inline constexpr std::uint64_t kFit = 0x0a;
inline constexpr std::uint64_t kDomain = 0x0b;
inline constexpr std::uint64_t kReport = 0x0c;
}  // namespace seed_tag

}  // namespace ksbo
