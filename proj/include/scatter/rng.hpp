#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "scatter/common.hpp"

namespace scatter {

/// splitmix64; used both as a stream generator and to mix seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic across platforms (unlike std::normal_distribution, whose
/// output is implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that nearby seeds decorrelate.
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return next_u64() % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double c = std::cos(2.0 * kPi * u2);
    const double s = std::sin(2.0 * kPi * u2);
    spare_ = r * s;
    have_spare_ = true;
    return r * c;
  }

  /// Complex standard normal: unit total variance, i.e. Re/Im ~ N(0, 1/2).
  Complex complex_normal() {
    const double inv_sqrt2 = 0.70710678118654752440;
    const double re = normal() * inv_sqrt2;
    const double im = normal() * inv_sqrt2;
    return {re, im};
  }

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for realization r of a named experiment: independent streams per
/// (master seed, experiment id, realization index).
inline std::uint64_t realization_seed(std::uint64_t master_seed, std::string_view experiment_id,
                                      std::uint64_t realization) {
  std::uint64_t state = master_seed ^ hash_string(experiment_id);
  splitmix64(state);
  state ^= 0x9e3779b97f4a7c15ULL * (realization + 1);
  return splitmix64(state);
}

}  // namespace scatter
