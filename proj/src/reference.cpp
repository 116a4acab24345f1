#include "cascade/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cascade::reference {

using kernels::ConvGeom;
using kernels::conv_out_size;

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                      ConvGeom g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int ho = conv_out_size(xs.h, ws.h, g);
  const int wo = conv_out_size(xs.w, ws.w, g);
  Tensor y({xs.n, ws.n, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < xs.c; ++ci)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += static_cast<double>(x.at(n, ci, iy, ix)) *
                       weight.at(co, ci, ky, kx);
              }
          y.at(n, co, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     ConvGeom g, Tensor& dx, Tensor& dweight, Tensor& dbias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const Shape ys = dy.shape();
  dx = Tensor(xs);
  dweight = Tensor(ws);
  dbias = Tensor({ws.n, 1, 1, 1});
  for (int n = 0; n < ys.n; ++n)
    for (int co = 0; co < ys.c; ++co)
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          const float gv = dy.at(n, co, oy, ox);
          dbias[co] += gv;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                dweight.at(co, ci, ky, kx) += gv * x.at(n, ci, iy, ix);
                dx.at(n, ci, iy, ix) += gv * weight.at(co, ci, ky, kx);
              }
        }
}

Tensor group_norm_forward(const Tensor& x, int groups, float eps) {
  const Shape s = x.shape();
  const int cpg = s.c / groups;
  Tensor y(s);
  for (int n = 0; n < s.n; ++n)
    for (int gi = 0; gi < groups; ++gi) {
      double mean = 0.0;
      int count = 0;
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int yy = 0; yy < s.h; ++yy)
          for (int xx = 0; xx < s.w; ++xx) {
            mean += x.at(n, c, yy, xx);
            ++count;
          }
      mean /= count;
      double var = 0.0;
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int yy = 0; yy < s.h; ++yy)
          for (int xx = 0; xx < s.w; ++xx) {
            const double d = x.at(n, c, yy, xx) - mean;
            var += d * d;
          }
      var /= count;
      const double rstd = 1.0 / std::sqrt(var + eps);
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int yy = 0; yy < s.h; ++yy)
          for (int xx = 0; xx < s.w; ++xx)
            y.at(n, c, yy, xx) =
                static_cast<float>((x.at(n, c, yy, xx) - mean) * rstd);
    }
  return y;
}

Tensor grid_sample(const Tensor& src, const Tensor& flow) {
  const Shape ss = src.shape();
  const Shape fs = flow.shape();
  Tensor out({fs.n, ss.c, ss.h, ss.w});
  for (int n = 0; n < fs.n; ++n)
    for (int y = 0; y < ss.h; ++y)
      for (int x = 0; x < ss.w; ++x) {
        double sx = x + flow.at(n, 0, y, x) * 0.5 * (ss.w - 1);
        double sy = y + flow.at(n, 1, y, x) * 0.5 * (ss.h - 1);
        sx = std::clamp(sx, 0.0, ss.w - 1.0);
        sy = std::clamp(sy, 0.0, ss.h - 1.0);
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, ss.w - 1);
        const int y1 = std::min(y0 + 1, ss.h - 1);
        const double fx = sx - x0;
        const double fy = sy - y0;
        for (int c = 0; c < ss.c; ++c) {
          const int sn = ss.n == 1 ? 0 : n;
          const double v = src.at(sn, c, y0, x0) * (1 - fx) * (1 - fy) +
                           src.at(sn, c, y0, x1) * fx * (1 - fy) +
                           src.at(sn, c, y1, x0) * (1 - fx) * fy +
                           src.at(sn, c, y1, x1) * fx * fy;
          out.at(n, c, y, x) = static_cast<float>(v);
        }
      }
  return out;
}

Tensor upsample_bilinear2x(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y({s.n, s.c, 2 * s.h, 2 * s.w});
  auto coord = [](int o, int in, int& i0, int& i1, double& f) {
    const double c = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    i0 = std::min(static_cast<int>(c), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    f = c - i0;
  };
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < 2 * s.h; ++oy)
        for (int ox = 0; ox < 2 * s.w; ++ox) {
          int y0, y1, x0, x1;
          double fy, fx;
          coord(oy, s.h, y0, y1, fy);
          coord(ox, s.w, x0, x1, fx);
          y.at(n, c, oy, ox) = static_cast<float>(
              x.at(n, c, y0, x0) * (1 - fx) * (1 - fy) +
              x.at(n, c, y0, x1) * fx * (1 - fy) +
              x.at(n, c, y1, x0) * (1 - fx) * fy + x.at(n, c, y1, x1) * fx * fy);
        }
  return y;
}

double ssim_plane(const float* a, const float* b, int h, int w, int window,
                  double data_range) {
  if (h < window || w < window) throw std::invalid_argument("ssim: too small");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double count = static_cast<double>(window) * window;
  double total = 0.0;
  int windows = 0;
  for (int y = 0; y + window <= h; ++y)
    for (int x = 0; x + window <= w; ++x) {
      double ma = 0, mb = 0;
      for (int dy = 0; dy < window; ++dy)
        for (int dx = 0; dx < window; ++dx) {
          ma += a[(y + dy) * w + x + dx];
          mb += b[(y + dy) * w + x + dx];
        }
      ma /= count;
      mb /= count;
      double va = 0, vb = 0, cov = 0;
      for (int dy = 0; dy < window; ++dy)
        for (int dx = 0; dx < window; ++dx) {
          const double da = a[(y + dy) * w + x + dx] - ma;
          const double db = b[(y + dy) * w + x + dx] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= count;
      vb /= count;
      cov /= count;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / windows;
}

}  // namespace cascade::reference
