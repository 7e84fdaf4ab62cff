#ifndef SKIPFUSE_RANDOM_HPP_
#define SKIPFUSE_RANDOM_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "skipfuse/error.hpp"
#include "skipfuse/matrix.hpp"

namespace skipfuse {

/*
 * Seeded randomness for synthetic weights and token sampling.
 *
 * Generator: xoshiro256** (Blackman & Vigna), state expanded from the 64-bit
 * seed with SplitMix64. Gaussians come from the Marsaglia polar method using
 * `portable_log`, which is built from IEEE basic operations only, so a
 * (seed, shape, scale) triple yields the same bits on every conforming
 * platform (build with -ffp-contract=off). Do not change any of this without
 * regenerating the golden checkpoint under tests/data.
 */
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidValue, "below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

/// Natural log for x > 0 using frexp and a fixed-length atanh series.
/// Relative error is below 2 ulp; results are identical wherever IEEE
/// double arithmetic is.
inline double portable_log(double x) {
  int exponent = 0;
  double m = std::frexp(x, &exponent);  // x = m * 2^exponent, m in [0.5, 1)
  if (m < 0.70710678118654752440) {
    m *= 2.0;
    exponent -= 1;
  }
  // ln m = 2 atanh(z), z = (m - 1) / (m + 1), |z| <= 0.1716
  const double z = (m - 1.0) / (m + 1.0);
  const double z2 = z * z;
  double term = z;
  double sum = 0.0;
  for (int k = 0; k < 16; ++k) {
    sum += term / static_cast<double>(2 * k + 1);
    term *= z2;
  }
  constexpr double kLn2 = 0.693147180559945309417232121458;
  return 2.0 * sum + static_cast<double>(exponent) * kLn2;
}

class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * rng_.uniform() - 1.0;
      v = 2.0 * rng_.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * portable_log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

 private:
  Xoshiro256 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Entries i.i.d. Normal(0, scale^2), filled in row-major order.
inline Matrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              double scale) {
  if (rows == 0 || cols == 0)
    throw Error(ErrorCode::DimensionMismatch, "random_gaussian needs rows, cols >= 1");
  GaussianSampler g(seed);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * g.next();
  return m;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_RANDOM_HPP_
