#pragma once

#include <cstdint>
#include <random>

#include "cascade/tensor.hpp"

namespace cascade {

/// Seeded random source. All stochastic code paths take one explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Integer in [lo, hi] inclusive.
  int integer(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  void fill_normal(Tensor& t) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (auto& v : t.vec()) v = d(engine_);
  }
  Tensor normal_like(Shape s) {
    Tensor t(s);
    fill_normal(t);
    return t;
  }

  /// Derive an independent stream for a sub-task.
  Rng fork(std::uint64_t salt) { return Rng(engine_() ^ mix(salt)); }

  std::mt19937_64& engine() { return engine_; }

  // splitmix64 finalizer, so nearby seeds give unrelated streams.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cascade
