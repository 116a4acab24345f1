#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "cascade/nn/ops.hpp"
#include "cascade/rng.hpp"
#include "cascade/tensor.hpp"

namespace testutil {

inline double diff_max(const cascade::Tensor& a, const cascade::Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

inline double peak(const cascade::Tensor& a) {
  double m = 0;
  for (float v : a.vec()) m = std::max(m, std::abs(double(v)));
  return m;
}

inline bool bit_equal(const cascade::Tensor& a, const cascade::Tensor& b) {
  return a.shape() == b.shape() && a.vec() == b.vec();
}

inline cascade::Tensor uniform(cascade::Shape s, std::uint64_t seed, float lo = 0.f, float hi = 1.f) {
  cascade::Rng rng(seed);
  cascade::Tensor t(s);
  for (auto& v : t.vec()) v = float(rng.uniform(lo, hi));
  return t;
}

/// Central-difference check of d mse(f(x), target)/dx for a random fixed
/// target. Returns max |analytic - numeric| / max |numeric|.
inline double gradcheck(const std::function<cascade::nn::Var(const cascade::nn::Var&)>& f,
                        const cascade::Tensor& x0, double eps = 1e-2, std::uint64_t seed = 3) {
  using namespace cascade;
  auto x = nn::parameter(x0);
  auto y = f(x);
  Rng rng(seed);
  const Tensor target = rng.normal_like(y->value.shape());
  nn::backward(nn::mse_loss(y, target));
  const Tensor analytic = x->grad;
  auto loss_at = [&](const Tensor& xv) {
    const Tensor out = f(nn::constant(xv))->value;
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = double(out[i]) - target[i];
      s += d * d;
    }
    return s / double(out.size());
  };
  double worst = 0, scale = 1e-12;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += float(eps);
    xm[i] -= float(eps);
    const double num = (loss_at(xp) - loss_at(xm)) / (2 * eps);
    worst = std::max(worst, std::abs(num - analytic[i]));
    scale = std::max(scale, std::abs(num));
  }
  return worst / scale;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("cascade_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testutil
