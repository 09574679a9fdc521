#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mcqa {

// splitmix64 generator with hand-rolled distributions. The standard library
// distributions are implementation-defined, which would break the
// byte-identical reproducibility contract; everything random in this project
// goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent stream derived from a seed and up to two stream labels.
  static Rng derive(std::uint64_t seed, std::uint64_t s0, std::uint64_t s1 = 0) {
    return Rng(mix(mix(mix(seed) ^ s0) ^ s1));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t reject_under = (-n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= reject_under) return x % n;
    }
  }

  int bit() { return static_cast<int>(next_u64() >> 63); }

  // Box-Muller, one value per call; the argument of log is in (0, 1].
  double normal(double mean, double stddev) {
    const double u = 1.0 - uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 6.283185307179586476925286766559 * uniform();
    return mean + stddev * r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace mcqa
