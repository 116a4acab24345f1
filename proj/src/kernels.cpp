#include "cascade/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cascade::kernels {

int conv_out_size(int in, int k, ConvGeom g) {
  return (in + 2 * g.pad - k) / g.stride + 1;
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

namespace {

struct ConvDims {
  int n, cin, h, w, cout, k, ho, wo;
  long rows() const { return static_cast<long>(cin) * k * k; }
  long cols() const { return static_cast<long>(n) * ho * wo; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight, ConvGeom g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw std::invalid_argument("conv2d: weight " + ws.str() +
                                " incompatible with input " + xs.str());
  }
  ConvDims d{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, 0, 0};
  d.ho = conv_out_size(xs.h, ws.h, g);
  d.wo = conv_out_size(xs.w, ws.w, g);
  if (d.ho <= 0 || d.wo <= 0) throw std::invalid_argument("conv2d: empty output");
  return d;
}

// col[(ci*k + ky)*k + kx][n*P + oy*wo + ox]
std::vector<float> im2col(const Tensor& x, const ConvDims& d, ConvGeom g) {
  const long cols = d.cols();
  const long plane_out = static_cast<long>(d.ho) * d.wo;
  std::vector<float> col(static_cast<std::size_t>(d.rows() * cols));
  const long rows = d.rows();
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const int ci = static_cast<int>(r / (d.k * d.k));
    const int ky = static_cast<int>((r / d.k) % d.k);
    const int kx = static_cast<int>(r % d.k);
    float* dst = col.data() + r * cols;
    for (int n = 0; n < d.n; ++n) {
      const float* src = x.plane(n, ci);
      float* out = dst + n * plane_out;
      for (int oy = 0; oy < d.ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        float* orow = out + static_cast<long>(oy) * d.wo;
        if (iy < 0 || iy >= d.h) {
          std::fill(orow, orow + d.wo, 0.0f);
          continue;
        }
        const float* irow = src + static_cast<long>(iy) * d.w;
        for (int ox = 0; ox < d.wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          orow[ox] = (ix >= 0 && ix < d.w) ? irow[ix] : 0.0f;
        }
      }
    }
  }
  return col;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                      ConvGeom g) {
  const ConvDims d = conv_dims(x, weight, g);
  const long cols = d.cols();
  const long plane_out = static_cast<long>(d.ho) * d.wo;
  std::vector<float> col = im2col(x, d, g);
  std::vector<float> prod(static_cast<std::size_t>(d.cout) * cols);
  gemm(false, false, d.cout, static_cast<int>(cols), static_cast<int>(d.rows()),
       1.0f, weight.data(), static_cast<int>(d.rows()), col.data(),
       static_cast<int>(cols), 0.0f, prod.data(), static_cast<int>(cols));

  Tensor y({d.n, d.cout, d.ho, d.wo});
  const bool has_bias = !bias.empty();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      const float* src = prod.data() + co * cols + n * plane_out;
      float* dst = y.plane(n, co);
      const float b = has_bias ? bias[co] : 0.0f;
      for (long p = 0; p < plane_out; ++p) dst[p] = src[p] + b;
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     ConvGeom g, Tensor* dx, Tensor& dweight, Tensor* dbias) {
  const ConvDims d = conv_dims(x, weight, g);
  const long cols = d.cols();
  const long plane_out = static_cast<long>(d.ho) * d.wo;
  if (dy.shape() != Shape{d.n, d.cout, d.ho, d.wo}) {
    throw std::invalid_argument("conv2d_backward: dy shape " + dy.shape().str());
  }

  std::vector<float> dprod(static_cast<std::size_t>(d.cout) * cols);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      std::memcpy(dprod.data() + co * cols + n * plane_out, dy.plane(n, co),
                  plane_out * sizeof(float));
    }
  }

  if (dbias) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      double s = 0.0;
      const float* row = dprod.data() + co * cols;
      for (long p = 0; p < cols; ++p) s += row[p];
      (*dbias)[co] += static_cast<float>(s);
    }
  }

  {
    std::vector<float> col = im2col(x, d, g);
    gemm(false, true, d.cout, static_cast<int>(d.rows()), static_cast<int>(cols),
         1.0f, dprod.data(), static_cast<int>(cols), col.data(),
         static_cast<int>(cols), 1.0f, dweight.data(), static_cast<int>(d.rows()));
  }

  if (!dx) return;
  std::vector<float> dcol(static_cast<std::size_t>(d.rows() * cols));
  gemm(true, false, static_cast<int>(d.rows()), static_cast<int>(cols), d.cout,
       1.0f, weight.data(), static_cast<int>(d.rows()), dprod.data(),
       static_cast<int>(cols), 0.0f, dcol.data(), static_cast<int>(cols));

  *dx = Tensor(x.shape());
  // col2im: each (n, ci) input plane gathers from its own k*k rows.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      float* dst = dx->plane(n, ci);
      for (int ky = 0; ky < d.k; ++ky) {
        for (int kx = 0; kx < d.k; ++kx) {
          const long r = (static_cast<long>(ci) * d.k + ky) * d.k + kx;
          const float* src = dcol.data() + r * cols + n * plane_out;
          for (int oy = 0; oy < d.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            float* drow = dst + static_cast<long>(iy) * d.w;
            const float* srow = src + static_cast<long>(oy) * d.wo;
            for (int ox = 0; ox < d.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < d.w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

Tensor group_norm_forward(const Tensor& x, int groups, float eps,
                          GroupNormStats& stats) {
  const Shape s = x.shape();
  if (groups <= 0 || s.c % groups != 0) {
    throw std::invalid_argument("group_norm: channels not divisible by groups");
  }
  const int cpg = s.c / groups;
  const std::size_t count = static_cast<std::size_t>(cpg) * s.plane();
  stats.mean.assign(static_cast<std::size_t>(s.n) * groups, 0.0f);
  stats.rstd.assign(static_cast<std::size_t>(s.n) * groups, 0.0f);
  Tensor y(s);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const float* src = x.plane(n, gi * cpg);
      double sum = 0.0;
      double sq = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        sum += src[i];
        sq += static_cast<double>(src[i]) * src[i];
      }
      const double mean = sum / count;
      const double var = std::max(0.0, sq / count - mean * mean);
      const float rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
      const float m = static_cast<float>(mean);
      stats.mean[n * groups + gi] = m;
      stats.rstd[n * groups + gi] = rstd;
      float* dst = y.plane(n, gi * cpg);
      for (std::size_t i = 0; i < count; ++i) dst[i] = (src[i] - m) * rstd;
    }
  }
  return y;
}

Tensor group_norm_backward(const Tensor& xhat, const Tensor& dxhat, int groups,
                           const GroupNormStats& stats) {
  const Shape s = xhat.shape();
  const int cpg = s.c / groups;
  const std::size_t count = static_cast<std::size_t>(cpg) * s.plane();
  Tensor dx(s);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const float* xh = xhat.plane(n, gi * cpg);
      const float* dxh = dxhat.plane(n, gi * cpg);
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        sum_d += dxh[i];
        sum_dx += static_cast<double>(dxh[i]) * xh[i];
      }
      const float mean_d = static_cast<float>(sum_d / count);
      const float mean_dx = static_cast<float>(sum_dx / count);
      const float rstd = stats.rstd[n * groups + gi];
      float* dst = dx.plane(n, gi * cpg);
      for (std::size_t i = 0; i < count; ++i) {
        dst[i] = rstd * (dxh[i] - mean_d - xh[i] * mean_dx);
      }
    }
  }
  return dx;
}

namespace {

struct Tap {
  int x0, x1, y0, y1;
  float fx, fy;
  bool clamped_x, clamped_y;
};

// Sample position for output pixel (x, y) displaced by a normalized offset.
inline Tap make_tap(int x, int y, float fu, float fv, int w, int h) {
  const float sx_raw = x + fu * 0.5f * (w - 1);
  const float sy_raw = y + fv * 0.5f * (h - 1);
  Tap t{};
  const float sx = std::clamp(sx_raw, 0.0f, static_cast<float>(w - 1));
  const float sy = std::clamp(sy_raw, 0.0f, static_cast<float>(h - 1));
  t.clamped_x = sx != sx_raw;
  t.clamped_y = sy != sy_raw;
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.fx = sx - t.x0;
  t.fy = sy - t.y0;
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  return t;
}

void check_flow(const Tensor& src, const Tensor& flow) {
  const Shape ss = src.shape();
  const Shape fs = flow.shape();
  if (fs.c != 2 || fs.h != ss.h || fs.w != ss.w ||
      (ss.n != fs.n && ss.n != 1)) {
    throw std::invalid_argument("grid_sample: flow " + fs.str() +
                                " incompatible with source " + ss.str());
  }
}

}  // namespace

Tensor grid_sample(const Tensor& src, const Tensor& flow) {
  check_flow(src, flow);
  const Shape ss = src.shape();
  const Shape fs = flow.shape();
  Tensor out({fs.n, ss.c, ss.h, ss.w});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < fs.n; ++n) {
    for (int y = 0; y < ss.h; ++y) {
      const int sn = ss.n == 1 ? 0 : n;
      const float* fu = flow.plane(n, 0) + static_cast<long>(y) * ss.w;
      const float* fv = flow.plane(n, 1) + static_cast<long>(y) * ss.w;
      for (int x = 0; x < ss.w; ++x) {
        const Tap t = make_tap(x, y, fu[x], fv[x], ss.w, ss.h);
        for (int c = 0; c < ss.c; ++c) {
          const float* p = src.plane(sn, c);
          const float top = p[t.y0 * ss.w + t.x0] * (1.0f - t.fx) +
                            p[t.y0 * ss.w + t.x1] * t.fx;
          const float bot = p[t.y1 * ss.w + t.x0] * (1.0f - t.fx) +
                            p[t.y1 * ss.w + t.x1] * t.fx;
          out.at(n, c, y, x) = top * (1.0f - t.fy) + bot * t.fy;
        }
      }
    }
  }
  return out;
}

Tensor grid_sample_backward_flow(const Tensor& src, const Tensor& flow,
                                 const Tensor& dout) {
  check_flow(src, flow);
  const Shape ss = src.shape();
  const Shape fs = flow.shape();
  Tensor dflow(fs);
  const float su = 0.5f * (ss.w - 1);
  const float sv = 0.5f * (ss.h - 1);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < fs.n; ++n) {
    for (int y = 0; y < ss.h; ++y) {
      const int sn = ss.n == 1 ? 0 : n;
      for (int x = 0; x < ss.w; ++x) {
        const Tap t = make_tap(x, y, flow.at(n, 0, y, x), flow.at(n, 1, y, x),
                               ss.w, ss.h);
        float gx = 0.0f;
        float gy = 0.0f;
        for (int c = 0; c < ss.c; ++c) {
          const float* p = src.plane(sn, c);
          const float v00 = p[t.y0 * ss.w + t.x0];
          const float v01 = p[t.y0 * ss.w + t.x1];
          const float v10 = p[t.y1 * ss.w + t.x0];
          const float v11 = p[t.y1 * ss.w + t.x1];
          const float g = dout.at(n, c, y, x);
          gx += g * ((v01 - v00) * (1.0f - t.fy) + (v11 - v10) * t.fy);
          gy += g * ((v10 - v00) * (1.0f - t.fx) + (v11 - v01) * t.fx);
        }
        dflow.at(n, 0, y, x) = t.clamped_x ? 0.0f : gx * su;
        dflow.at(n, 1, y, x) = t.clamped_y ? 0.0f : gy * sv;
      }
    }
  }
  return dflow;
}

namespace {

struct Lerp {
  int i0, i1;
  float f;
};

std::vector<Lerp> upsample_taps(int in) {
  std::vector<Lerp> taps(static_cast<std::size_t>(in) * 2);
  for (int o = 0; o < 2 * in; ++o) {
    const float s = std::max(0.0f, (o + 0.5f) * 0.5f - 0.5f);
    const int i0 = std::min(static_cast<int>(s), in - 1);
    taps[o] = {i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear2x(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y({s.n, s.c, s.h * 2, s.w * 2});
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = y.plane(n, c);
      for (int oy = 0; oy < 2 * s.h; ++oy) {
        const Lerp ly = ty[oy];
        for (int ox = 0; ox < 2 * s.w; ++ox) {
          const Lerp lx = tx[ox];
          const float top = src[ly.i0 * s.w + lx.i0] * (1 - lx.f) +
                            src[ly.i0 * s.w + lx.i1] * lx.f;
          const float bot = src[ly.i1 * s.w + lx.i0] * (1 - lx.f) +
                            src[ly.i1 * s.w + lx.i1] * lx.f;
          dst[oy * 2 * s.w + ox] = top * (1 - ly.f) + bot * ly.f;
        }
      }
    }
  }
  return y;
}

Tensor upsample_bilinear2x_backward(const Tensor& dy, Shape in_shape) {
  const Shape s = in_shape;
  Tensor dx(s);
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* g = dy.plane(n, c);
      float* dst = dx.plane(n, c);
      for (int oy = 0; oy < 2 * s.h; ++oy) {
        const Lerp ly = ty[oy];
        for (int ox = 0; ox < 2 * s.w; ++ox) {
          const Lerp lx = tx[ox];
          const float v = g[oy * 2 * s.w + ox];
          dst[ly.i0 * s.w + lx.i0] += v * (1 - ly.f) * (1 - lx.f);
          dst[ly.i0 * s.w + lx.i1] += v * (1 - ly.f) * lx.f;
          dst[ly.i1 * s.w + lx.i0] += v * ly.f * (1 - lx.f);
          dst[ly.i1 * s.w + lx.i1] += v * ly.f * lx.f;
        }
      }
    }
  }
  return dx;
}

double ssim_plane(const float* a, const float* b, int h, int w, int window,
                  double data_range) {
  if (window <= 0 || h < window || w < window) {
    throw std::invalid_argument("ssim: image smaller than window");
  }
  const int iw = w + 1;
  const std::size_t isz = static_cast<std::size_t>(h + 1) * iw;
  std::vector<double> sa(isz, 0.0), sb(isz, 0.0), saa(isz, 0.0), sbb(isz, 0.0),
      sab(isz, 0.0);
  for (int y = 0; y < h; ++y) {
    double ra = 0, rb = 0, raa = 0, rbb = 0, rab = 0;
    for (int x = 0; x < w; ++x) {
      const double va = a[y * w + x];
      const double vb = b[y * w + x];
      ra += va;
      rb += vb;
      raa += va * va;
      rbb += vb * vb;
      rab += va * vb;
      const std::size_t i = static_cast<std::size_t>(y + 1) * iw + x + 1;
      const std::size_t up = i - iw;
      sa[i] = sa[up] + ra;
      sb[i] = sb[up] + rb;
      saa[i] = saa[up] + raa;
      sbb[i] = sbb[up] + rbb;
      sab[i] = sab[up] + rab;
    }
  }
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double inv = 1.0 / (static_cast<double>(window) * window);
  const int ny = h - window + 1;
  const int nx = w - window + 1;
  std::vector<double> row_sum(ny, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < ny; ++y) {
    double acc = 0.0;
    for (int x = 0; x < nx; ++x) {
      const std::size_t i00 = static_cast<std::size_t>(y) * iw + x;
      const std::size_t i01 = i00 + window;
      const std::size_t i10 = i00 + static_cast<std::size_t>(window) * iw;
      const std::size_t i11 = i10 + window;
      auto box = [&](const std::vector<double>& s) {
        return (s[i11] - s[i01] - s[i10] + s[i00]) * inv;
      };
      const double ma = box(sa);
      const double mb = box(sb);
      const double va = box(saa) - ma * ma;
      const double vb = box(sbb) - mb * mb;
      const double cov = box(sab) - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    row_sum[y] = acc;
  }
  double total = 0.0;
  for (double r : row_sum) total += r;
  return total / (static_cast<double>(ny) * nx);
}

}  // namespace cascade::kernels
