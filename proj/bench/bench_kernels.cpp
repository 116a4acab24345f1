// Parallel kernels against their serial references on training-sized shapes.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cascade/kernels.hpp"
#include "cascade/reference.hpp"
#include "cascade/rng.hpp"

using namespace cascade;

namespace {

double best_ms(const std::function<void()>& fn, int reps) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

// Largest difference, scaled by the largest reference magnitude.
double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0, scale = 1e-30;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a[i]) - b[i]));
    scale = std::max(scale, std::abs(double(b[i])));
  }
  return m / scale;
}

void row(const std::string& name, double fast, double ref, double diff) {
  std::printf("%-26s %10.3f %10.3f %8.1fx %12.3g\n", name.c_str(), fast, ref, ref / fast, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: OpenMP/BLAS kernels vs serial reference"};
  int reps = 5;
  int batch = 16;
  app.add_option("--reps", reps, "Repetitions, best time is reported")->check(CLI::PositiveNumber);
  app.add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Rng rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-26s %10s %10s %9s %12s\n", "kernel", "fast ms", "ref ms", "speedup", "rel diff");

  {
    const Tensor x = rng.normal_like({batch, 32, 32, 32});
    const Tensor w = rng.normal_like({32, 32, 3, 3});
    const Tensor b = rng.normal_like({32, 1, 1, 1});
    const kernels::ConvGeom g{1, 1};
    Tensor yf, yr;
    const double f = best_ms([&] { yf = kernels::conv2d_forward(x, w, b, g); }, reps);
    const double r = best_ms([&] { yr = reference::conv2d_forward(x, w, b, g); }, std::min(reps, 2));
    row("conv3x3 fwd 32->32 @32", f, r, max_diff(yf, yr));

    const Tensor dy = rng.normal_like(yf.shape());
    Tensor dxf(x.shape()), dwf(w.shape()), dbf(b.shape());
    Tensor dxr(x.shape()), dwr(w.shape()), dbr(b.shape());
    const double fb = best_ms([&] {
      dwf.zero();
      dbf.zero();
      kernels::conv2d_backward(x, w, dy, g, &dxf, dwf, &dbf);
    }, reps);
    const double rb = best_ms([&] {
      dwr.zero();
      dbr.zero();
      dxr.zero();
      reference::conv2d_backward(x, w, dy, g, dxr, dwr, dbr);
    }, std::min(reps, 2));
    row("conv3x3 bwd 32->32 @32", fb, rb, std::max(max_diff(dxf, dxr), max_diff(dwf, dwr)));
  }
  {
    const Tensor x = rng.normal_like({batch, 64, 16, 16});
    kernels::GroupNormStats st;
    Tensor yf, yr;
    const double f = best_ms([&] { yf = kernels::group_norm_forward(x, 8, 1e-5f, st); }, reps);
    const double r = best_ms([&] { yr = reference::group_norm_forward(x, 8, 1e-5f); }, reps);
    row("group_norm 64ch @16", f, r, max_diff(yf, yr));
  }
  {
    const Tensor src = rng.normal_like({batch, 3, 64, 64});
    Tensor flow = rng.normal_like({batch, 2, 64, 64});
    for (auto& v : flow.vec()) v *= 0.1f;
    Tensor yf, yr;
    const double f = best_ms([&] { yf = kernels::grid_sample(src, flow); }, reps);
    const double r = best_ms([&] { yr = reference::grid_sample(src, flow); }, reps);
    row("grid_sample 3ch @64", f, r, max_diff(yf, yr));
  }
  {
    const Tensor x = rng.normal_like({batch, 32, 32, 32});
    Tensor yf, yr;
    const double f = best_ms([&] { yf = kernels::upsample_bilinear2x(x); }, reps);
    const double r = best_ms([&] { yr = reference::upsample_bilinear2x(x); }, reps);
    row("upsample2x 32ch @32", f, r, max_diff(yf, yr));
  }
  {
    Tensor a({1, 1, 64, 64}), b({1, 1, 64, 64});
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = float(rng.uniform());
      b[i] = std::clamp(a[i] + 0.1f * float(rng.normal()), 0.0f, 1.0f);
    }
    double sf = 0, sr = 0;
    const double f = best_ms([&] { sf = kernels::ssim_plane(a.data(), b.data(), 64, 64, 8, 1.0); }, reps);
    const double r = best_ms([&] { sr = reference::ssim_plane(a.data(), b.data(), 64, 64, 8, 1.0); }, reps);
    row("ssim_plane 64x64 w8", f, r, std::abs(sf - sr));
  }
  return 0;
}
