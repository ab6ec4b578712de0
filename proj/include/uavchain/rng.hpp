#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace uavchain {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent sub-seed for (run seed, purpose, index).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ purpose) ^ index);
}

namespace stream {
inline constexpr std::uint64_t kMobility = 1;
inline constexpr std::uint64_t kWorkload = 2;
inline constexpr std::uint64_t kNetwork = 3;
inline constexpr std::uint64_t kProposer = 4;
inline constexpr std::uint64_t kByzantine = 5;
inline constexpr std::uint64_t kProfiles = 6;
inline constexpr std::uint64_t kDeployment = 7;
inline constexpr std::uint64_t kAttack = 8;
}  // namespace stream

/// Seeded random stream. The engine is std::mt19937_64, whose output sequence
/// is fixed by the standard; the conversions below avoid the library
/// distributions, whose algorithms differ between standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Fisher-Yates with below(), so the permutation is library independent.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uavchain
