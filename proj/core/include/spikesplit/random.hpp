#pragma once

#include <cstdint>
#include <random>

#include "spikesplit/tensor.hpp"

namespace spikesplit {

/// Seeded generator shared by weight init, synthetic data and property tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Real uniform(Real lo = 0, Real hi = 1) { return std::uniform_real_distribution<Real>(lo, hi)(engine_); }
  Real normal(Real mean = 0, Real stddev = 1) { return std::normal_distribution<Real>(mean, stddev)(engine_); }
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [lo, hi].
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }
  bool bernoulli(Real p) { return std::bernoulli_distribution(p)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace spikesplit
