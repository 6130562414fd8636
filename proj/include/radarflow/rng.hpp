#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace radarflow {

/// Deterministic, stdlib-independent PRNG. Every randomized stage in the
/// project draws from this generator so outputs are bitwise reproducible
/// across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Fixed-point multiply keeps it branch-free
  /// and identical everywhere.
  std::uint64_t below(std::uint64_t n) {
    return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-stage seed derivation: the top-level seed and the stage name define a
/// fresh stream. An extra index (frame number, repetition, ...) splits further.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t index = 0) {
  SplitMix64 mix(base ^ fnv1a64(label));
  std::uint64_t s = mix.next_u64();
  if (index != 0) {
    SplitMix64 mix2(s ^ (0x9e3779b97f4a7c15ULL * index));
    s = mix2.next_u64();
  }
  return s;
}

/// k distinct indices from [0, n), ascending. Partial Fisher-Yates.
inline std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k,
                                                             SplitMix64& rng) {
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  if (k > n) k = n;
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint32_t j = i + std::uint32_t(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace radarflow
