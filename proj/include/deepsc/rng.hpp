#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace deepsc {

// Deterministic RNG. The mt19937_64 output sequence is pinned by the standard;
// the uniform/normal mappings are hand-rolled here because the std::*_distribution
// classes are implementation-defined and would break byte-identical reruns.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the polar method (rejection is deterministic given the
  // engine stream).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    has_spare_ = true;
    return u * mul;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates permutation of {0, ..., n-1}.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(eng_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream ids: splitmix64 chain over (seed, ids...). Used to give
  // every evaluation cell / clip / trial its own reproducible stream.
  static std::uint64_t derive(std::uint64_t seed) { return splitmix(seed); }

  template <typename... Rest>
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t id, Rest... rest) {
    return derive(splitmix(seed ^ (0x9e3779b97f4a7c15ULL + id)), rest...);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace deepsc
