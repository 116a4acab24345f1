#include "cascade/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cascade::nn {

namespace {

bool wants(const Var& v) { return v && v->requires_grad; }

void require_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename F, typename G>
Var unary(const Var& x, F fwd, G dfdx) {
  Tensor y(x->value.shape());
  const float* xs = x->value.data();
  float* ys = y.data();
  const long n = static_cast<long>(y.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) ys[i] = fwd(xs[i]);
  return make_node(std::move(y), {x}, [dfdx](Node& self) {
    const Var& in = self.parents[0];
    Tensor g(in->value.shape());
    const float* xv = in->value.data();
    const float* yv = self.value.data();
    const float* gy = self.grad.data();
    const long n = static_cast<long>(g.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) g[i] = gy[i] * dfdx(xv[i], yv[i]);
    in->accumulate(g);
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           kernels::ConvGeom g) {
  Tensor y = kernels::conv2d_forward(x->value, weight->value,
                                     bias ? bias->value : Tensor(), g);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(y), std::move(parents), [g](Node& self) {
    const Var& in = self.parents[0];
    const Var& w = self.parents[1];
    Tensor dw(w->value.shape());
    Tensor db;
    const bool has_bias = self.parents.size() > 2;
    if (has_bias) db = Tensor(self.parents[2]->value.shape());
    Tensor dx;
    kernels::conv2d_backward(in->value, w->value, self.grad, g,
                             wants(in) ? &dx : nullptr, dw,
                             has_bias ? &db : nullptr);
    if (wants(in)) in->accumulate(dx);
    if (wants(w)) w->accumulate(dw);
    if (has_bias && wants(self.parents[2])) self.parents[2]->accumulate(db);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const int n = xs.n;
  const int f = static_cast<int>(xs.numel() / std::max(1, n));
  const int o = ws.n;
  if (static_cast<std::size_t>(f) * o != ws.numel()) {
    throw std::invalid_argument("linear: weight " + ws.str() +
                                " incompatible with input " + xs.str());
  }
  Tensor y({n, o, 1, 1});
  if (bias) {
    for (int i = 0; i < n; ++i)
      std::memcpy(y.data() + static_cast<long>(i) * o, bias->value.data(),
                  o * sizeof(float));
  }
  kernels::gemm(false, true, n, o, f, 1.0f, x->value.data(), f,
                weight->value.data(), f, bias ? 1.0f : 0.0f, y.data(), o);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(y), std::move(parents), [n, f, o](Node& self) {
    const Var& in = self.parents[0];
    const Var& w = self.parents[1];
    if (wants(w)) {
      Tensor& dw = w->grad_buffer();
      kernels::gemm(true, false, o, f, n, 1.0f, self.grad.data(), o,
                    in->value.data(), f, 1.0f, dw.data(), f);
    }
    if (self.parents.size() > 2 && wants(self.parents[2])) {
      Tensor& db = self.parents[2]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) db[j] += self.grad[static_cast<long>(i) * o + j];
    }
    if (wants(in)) {
      Tensor dx(in->value.shape());
      kernels::gemm(false, false, n, f, o, 1.0f, self.grad.data(), o,
                    w->value.data(), f, 0.0f, dx.data(), f);
      in->accumulate(dx);
    }
  });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta) {
  constexpr float kEps = 1e-5f;
  auto stats = std::make_shared<kernels::GroupNormStats>();
  Tensor xhat = kernels::group_norm_forward(x->value, groups, kEps, *stats);
  const Shape s = xhat.shape();
  Tensor y = xhat;
  if (gamma || beta) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float gm = gamma ? gamma->value[c] : 1.0f;
        const float bt = beta ? beta->value[c] : 0.0f;
        float* p = y.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] = p[i] * gm + bt;
      }
  }
  std::vector<Var> parents{x};
  if (gamma) parents.push_back(gamma);
  if (beta) parents.push_back(beta);
  const bool has_gamma = static_cast<bool>(gamma);
  const bool has_beta = static_cast<bool>(beta);
  return make_node(
      std::move(y), std::move(parents),
      [xhat = std::move(xhat), stats, groups, has_gamma, has_beta](Node& self) {
        const Shape s = xhat.shape();
        const Var& in = self.parents[0];
        const Var* gm = has_gamma ? &self.parents[1] : nullptr;
        const Var* bt = has_beta ? &self.parents[has_gamma ? 2 : 1] : nullptr;
        if (gm && wants(*gm)) {
          Tensor& dg = (*gm)->grad_buffer();
          for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
              double acc = 0.0;
              const float* g = self.grad.plane(n, c);
              const float* xh = xhat.plane(n, c);
              for (std::size_t i = 0; i < s.plane(); ++i) acc += g[i] * xh[i];
              dg[c] += static_cast<float>(acc);
            }
        }
        if (bt && wants(*bt)) {
          Tensor& db = (*bt)->grad_buffer();
          for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
              double acc = 0.0;
              const float* g = self.grad.plane(n, c);
              for (std::size_t i = 0; i < s.plane(); ++i) acc += g[i];
              db[c] += static_cast<float>(acc);
            }
        }
        if (!wants(in)) return;
        Tensor dxhat = self.grad;
        if (gm) {
          for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
              const float k = (*gm)->value[c];
              float* p = dxhat.plane(n, c);
              for (std::size_t i = 0; i < s.plane(); ++i) p[i] *= k;
            }
        }
        in->accumulate(kernels::group_norm_backward(xhat, dxhat, groups, *stats));
      });
}

Var modulate(const Var& x, const Var& scale, const Var& shift) {
  const Shape s = x->value.shape();
  auto check = [&](const Var& v) {
    if (v && v->value.shape() != Shape{s.n, s.c, 1, 1}) {
      throw std::invalid_argument("modulate: expected " +
                                  Shape{s.n, s.c, 1, 1}.str() + ", got " +
                                  v->value.shape().str());
    }
  };
  check(scale);
  check(shift);
  Tensor y(s);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float k = 1.0f + (scale ? scale->value[n * s.c + c] : 0.0f);
      const float b = shift ? shift->value[n * s.c + c] : 0.0f;
      const float* src = x->value.plane(n, c);
      float* dst = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * k + b;
    }
  std::vector<Var> parents{x, scale, shift};
  return make_node(std::move(y), std::move(parents), [](Node& self) {
    const Var& in = self.parents[0];
    const Var& sc = self.parents[1];
    const Var& sh = self.parents[2];
    const Shape s = in->value.shape();
    Tensor dx;
    if (wants(in)) dx = Tensor(s);
    Tensor dsc;
    if (wants(sc)) dsc = Tensor(sc->value.shape());
    Tensor dsh;
    if (wants(sh)) dsh = Tensor(sh->value.shape());
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float k = 1.0f + (sc ? sc->value[n * s.c + c] : 0.0f);
        const float* g = self.grad.plane(n, c);
        const float* xv = in->value.plane(n, c);
        double gs = 0.0;
        double gb = 0.0;
        for (std::size_t i = 0; i < s.plane(); ++i) {
          gs += static_cast<double>(g[i]) * xv[i];
          gb += g[i];
        }
        if (!dx.empty()) {
          float* d = dx.plane(n, c);
          for (std::size_t i = 0; i < s.plane(); ++i) d[i] = g[i] * k;
        }
        if (!dsc.empty()) dsc[n * s.c + c] = static_cast<float>(gs);
        if (!dsh.empty()) dsh[n * s.c + c] = static_cast<float>(gb);
      }
    if (!dx.empty()) in->accumulate(dx);
    if (!dsc.empty()) sc->accumulate(dsc);
    if (!dsh.empty()) sh->accumulate(dsh);
  });
}

Var silu(const Var& x) {
  return unary(
      x, [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s * (1.0f + v * (1.0f - s));
      });
}

Var tanh(const Var& x) {
  return unary(
      x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Var leaky_relu(const Var& x, float slope) {
  return unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var add(const Var& a, const Var& b) {
  require_shape(a->value, b->value, "add");
  Tensor y = a->value + b->value;
  return make_node(std::move(y), {a, b}, [](Node& self) {
    if (wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (wants(self.parents[1])) self.parents[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_shape(a->value, b->value, "sub");
  Tensor y = a->value - b->value;
  return make_node(std::move(y), {a, b}, [](Node& self) {
    if (wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (wants(self.parents[1])) self.parents[1]->accumulate(self.grad * -1.0f);
  });
}

Var mul(const Var& a, const Var& b) {
  require_shape(a->value, b->value, "mul");
  Tensor y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * b->value[i];
  return make_node(std::move(y), {a, b}, [](Node& self) {
    const Var& pa = self.parents[0];
    const Var& pb = self.parents[1];
    if (wants(pa)) {
      Tensor g(pa->value.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pb->value[i];
      pa->accumulate(g);
    }
    if (wants(pb)) {
      Tensor g(pb->value.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pa->value[i];
      pb->accumulate(g);
    }
  });
}

Var scale(const Var& a, float s) {
  return make_node(a->value * s, {a}, [s](Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape s0 = parts.front()->value.shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p->value.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw std::invalid_argument("concat: incompatible " + s.str() + " vs " +
                                  s0.str());
    }
    channels += s.c;
  }
  Tensor y({s0.n, channels, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    int off = 0;
    for (const auto& p : parts) {
      const int c = p->value.shape().c;
      std::memcpy(y.plane(n, off), p->value.plane(n, 0), c * plane * sizeof(float));
      off += c;
    }
  }
  return make_node(std::move(y), parts, [](Node& self) {
    const Shape s = self.value.shape();
    int off = 0;
    for (const auto& p : self.parents) {
      const int c = p->value.shape().c;
      if (wants(p)) {
        Tensor g(p->value.shape());
        for (int n = 0; n < s.n; ++n)
          std::memcpy(g.plane(n, 0), self.grad.plane(n, off),
                      c * s.plane() * sizeof(float));
        p->accumulate(g);
      }
      off += c;
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape s = x->value.shape();
  Tensor y({s.n, s.c, 2 * s.h, 2 * s.w});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = x->value.plane(n, c);
      float* dst = y.plane(n, c);
      for (int yy = 0; yy < 2 * s.h; ++yy)
        for (int xx = 0; xx < 2 * s.w; ++xx)
          dst[yy * 2 * s.w + xx] = src[(yy / 2) * s.w + xx / 2];
    }
  return make_node(std::move(y), {x}, [](Node& self) {
    const Var& in = self.parents[0];
    const Shape s = in->value.shape();
    Tensor g(s);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* src = self.grad.plane(n, c);
        float* dst = g.plane(n, c);
        for (int yy = 0; yy < 2 * s.h; ++yy)
          for (int xx = 0; xx < 2 * s.w; ++xx)
            dst[(yy / 2) * s.w + xx / 2] += src[yy * 2 * s.w + xx];
      }
    in->accumulate(g);
  });
}

Var upsample_bilinear2x(const Var& x) {
  return make_node(kernels::upsample_bilinear2x(x->value), {x}, [](Node& self) {
    const Var& in = self.parents[0];
    in->accumulate(
        kernels::upsample_bilinear2x_backward(self.grad, in->value.shape()));
  });
}

Var avg_pool2x(const Var& x) {
  const Shape s = x->value.shape();
  if (s.h % 2 || s.w % 2) throw std::invalid_argument("avg_pool2x: odd size " + s.str());
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor y({s.n, s.c, oh, ow});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = x->value.plane(n, c);
      float* dst = y.plane(n, c);
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          const float* p = src + 2 * yy * s.w + 2 * xx;
          dst[yy * ow + xx] = 0.25f * (p[0] + p[1] + p[s.w] + p[s.w + 1]);
        }
    }
  return make_node(std::move(y), {x}, [](Node& self) {
    const Var& in = self.parents[0];
    const Shape s = in->value.shape();
    const int ow = s.w / 2;
    Tensor g(s);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* src = self.grad.plane(n, c);
        float* dst = g.plane(n, c);
        for (int yy = 0; yy < s.h; ++yy)
          for (int xx = 0; xx < s.w; ++xx) dst[yy * s.w + xx] = 0.25f * src[(yy / 2) * ow + xx / 2];
      }
    in->accumulate(g);
  });
}

namespace {

// Copies between the {C,H,W} layout (big) and {C*r*r,H/r,W/r} (small).
void shuffle_copy(const float* src, float* dst, Shape big, int r, bool to_small) {
  const int sh = big.h / r, sw = big.w / r;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < big.n; ++n)
    for (int c = 0; c < big.c; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          const std::size_t sc = static_cast<std::size_t>(n) * big.c * r * r + c * r * r + dy * r + dx;
          for (int y = 0; y < sh; ++y)
            for (int x = 0; x < sw; ++x) {
              const std::size_t bi =
                  ((static_cast<std::size_t>(n) * big.c + c) * big.h + y * r + dy) * big.w + x * r + dx;
              const std::size_t si = (sc * sh + y) * sw + x;
              if (to_small) {
                dst[si] = src[bi];
              } else {
                dst[bi] = src[si];
              }
            }
        }
}

}  // namespace

Var pixel_unshuffle(const Var& x, int r) {
  const Shape s = x->value.shape();
  if (r < 1 || s.h % r || s.w % r) throw std::invalid_argument("pixel_unshuffle: bad size " + s.str());
  Tensor y({s.n, s.c * r * r, s.h / r, s.w / r});
  shuffle_copy(x->value.data(), y.data(), s, r, true);
  return make_node(std::move(y), {x}, [r](Node& self) {
    const Var& in = self.parents[0];
    Tensor g(in->value.shape());
    shuffle_copy(self.grad.data(), g.data(), g.shape(), r, false);
    in->accumulate(g);
  });
}

Var pixel_shuffle(const Var& x, int r) {
  const Shape s = x->value.shape();
  if (r < 1 || s.c % (r * r)) throw std::invalid_argument("pixel_shuffle: bad channels " + s.str());
  Tensor y({s.n, s.c / (r * r), s.h * r, s.w * r});
  shuffle_copy(x->value.data(), y.data(), y.shape(), r, false);
  return make_node(std::move(y), {x}, [r](Node& self) {
    const Var& in = self.parents[0];
    Tensor g(in->value.shape());
    shuffle_copy(self.grad.data(), g.data(), self.grad.shape(), r, true);
    in->accumulate(g);
  });
}

Var clamp(const Var& x, float lo, float hi) {
  return unary(
      x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
      [lo, hi](float v, float) { return v > lo && v < hi ? 1.0f : 0.0f; });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->value.shape();
  Tensor y({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      const float* p = x->value.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      y[n * s.c + c] = static_cast<float>(acc / s.plane());
    }
  return make_node(std::move(y), {x}, [](Node& self) {
    const Var& in = self.parents[0];
    const Shape s = in->value.shape();
    Tensor g(s);
    const float inv = 1.0f / static_cast<float>(s.plane());
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float v = self.grad[n * s.c + c] * inv;
        float* p = g.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] = v;
      }
    in->accumulate(g);
  });
}

namespace {

// Per-sample intermediates kept for the attention backward pass.
struct AttentionCache {
  int n, c, p, l, d;
  std::vector<float> tokens;  // n * p * c
  std::vector<float> q;       // n * p * c
  std::vector<float> k;       // n * l * c
  std::vector<float> v;       // n * l * c
  std::vector<float> attn;    // n * p * l
  std::vector<float> mixed;   // n * p * c
};

}  // namespace

Var cross_attention(const Var& x, const Var& context, const Var& wq,
                    const Var& wk, const Var& wv, const Var& wo,
                    const Var& bo) {
  const Shape xs = x->value.shape();
  const Shape cs = context->value.shape();
  if (cs.n != xs.n || cs.w != 1) {
    throw std::invalid_argument("cross_attention: context " + cs.str() +
                                " incompatible with " + xs.str());
  }
  auto cache = std::make_shared<AttentionCache>();
  AttentionCache& ac = *cache;
  ac.n = xs.n;
  ac.c = xs.c;
  ac.p = xs.h * xs.w;
  ac.l = cs.c;
  ac.d = cs.h;
  if (wk->value.shape().numel() != static_cast<std::size_t>(ac.c) * ac.d ||
      wq->value.shape().numel() != static_cast<std::size_t>(ac.c) * ac.c) {
    throw std::invalid_argument("cross_attention: projection shapes");
  }
  const int n = ac.n, c = ac.c, p = ac.p, l = ac.l, d = ac.d;
  ac.tokens.resize(static_cast<std::size_t>(n) * p * c);
  ac.q.resize(ac.tokens.size());
  ac.mixed.resize(ac.tokens.size());
  ac.k.resize(static_cast<std::size_t>(n) * l * c);
  ac.v.resize(ac.k.size());
  ac.attn.resize(static_cast<std::size_t>(n) * p * l);
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(c));

  Tensor y(xs);
  for (int s = 0; s < n; ++s) {
    float* tok = ac.tokens.data() + static_cast<std::size_t>(s) * p * c;
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = x->value.plane(s, ch);
      for (int i = 0; i < p; ++i) tok[i * c + ch] = plane[i];
    }
    const float* ctx = context->value.data() + static_cast<std::size_t>(s) * l * d;
    float* q = ac.q.data() + static_cast<std::size_t>(s) * p * c;
    float* k = ac.k.data() + static_cast<std::size_t>(s) * l * c;
    float* v = ac.v.data() + static_cast<std::size_t>(s) * l * c;
    float* a = ac.attn.data() + static_cast<std::size_t>(s) * p * l;
    float* o = ac.mixed.data() + static_cast<std::size_t>(s) * p * c;
    kernels::gemm(false, true, p, c, c, 1.0f, tok, c, wq->value.data(), c, 0.0f, q, c);
    kernels::gemm(false, true, l, c, d, 1.0f, ctx, d, wk->value.data(), d, 0.0f, k, c);
    kernels::gemm(false, true, l, c, d, 1.0f, ctx, d, wv->value.data(), d, 0.0f, v, c);
    kernels::gemm(false, true, p, l, c, inv_sqrt, q, c, k, c, 0.0f, a, l);
    for (int i = 0; i < p; ++i) {
      float* row = a + static_cast<std::size_t>(i) * l;
      const float m = *std::max_element(row, row + l);
      double z = 0.0;
      for (int j = 0; j < l; ++j) {
        row[j] = std::exp(row[j] - m);
        z += row[j];
      }
      for (int j = 0; j < l; ++j) row[j] = static_cast<float>(row[j] / z);
    }
    kernels::gemm(false, false, p, c, l, 1.0f, a, l, v, c, 0.0f, o, c);
    std::vector<float> out(static_cast<std::size_t>(p) * c);
    for (int i = 0; i < p; ++i)
      for (int ch = 0; ch < c; ++ch) out[i * c + ch] = bo ? bo->value[ch] : 0.0f;
    kernels::gemm(false, true, p, c, c, 1.0f, o, c, wo->value.data(), c, 1.0f,
                  out.data(), c);
    for (int ch = 0; ch < c; ++ch) {
      float* plane = y.plane(s, ch);
      for (int i = 0; i < p; ++i) plane[i] = out[i * c + ch];
    }
  }

  std::vector<Var> parents{x, context, wq, wk, wv, wo, bo};
  return make_node(std::move(y), std::move(parents), [cache, inv_sqrt](Node& self) {
    const AttentionCache& ac = *cache;
    const int n = ac.n, c = ac.c, p = ac.p, l = ac.l, d = ac.d;
    const Var& x = self.parents[0];
    const Var& context = self.parents[1];
    const Var& wq = self.parents[2];
    const Var& wk = self.parents[3];
    const Var& wv = self.parents[4];
    const Var& wo = self.parents[5];
    const Var& bo = self.parents[6];
    Tensor dx;
    if (wants(x)) dx = Tensor(x->value.shape());
    Tensor dctx;
    if (wants(context)) dctx = Tensor(context->value.shape());
    Tensor dwq(wq->value.shape()), dwk(wk->value.shape()), dwv(wv->value.shape()),
        dwo(wo->value.shape());
    Tensor dbo;
    if (bo) dbo = Tensor(bo->value.shape());

    std::vector<float> dout(static_cast<std::size_t>(p) * c), dmix(dout.size()),
        dq(dout.size()), dtok(dout.size());
    std::vector<float> da(static_cast<std::size_t>(p) * l);
    std::vector<float> dk(static_cast<std::size_t>(l) * c), dv(dk.size());
    for (int s = 0; s < n; ++s) {
      const float* tok = ac.tokens.data() + static_cast<std::size_t>(s) * p * c;
      const float* ctx = context->value.data() + static_cast<std::size_t>(s) * l * d;
      const float* q = ac.q.data() + static_cast<std::size_t>(s) * p * c;
      const float* k = ac.k.data() + static_cast<std::size_t>(s) * l * c;
      const float* v = ac.v.data() + static_cast<std::size_t>(s) * l * c;
      const float* a = ac.attn.data() + static_cast<std::size_t>(s) * p * l;
      const float* o = ac.mixed.data() + static_cast<std::size_t>(s) * p * c;
      for (int ch = 0; ch < c; ++ch) {
        const float* g = self.grad.plane(s, ch);
        for (int i = 0; i < p; ++i) dout[i * c + ch] = g[i];
      }
      if (bo) {
        for (int i = 0; i < p; ++i)
          for (int ch = 0; ch < c; ++ch) dbo[ch] += dout[i * c + ch];
      }
      kernels::gemm(true, false, c, c, p, 1.0f, dout.data(), c, o, c, 1.0f,
                    dwo.data(), c);
      kernels::gemm(false, false, p, c, c, 1.0f, dout.data(), c, wo->value.data(),
                    c, 0.0f, dmix.data(), c);
      // dA = dO V^T ; dV = A^T dO
      kernels::gemm(false, true, p, l, c, 1.0f, dmix.data(), c, v, c, 0.0f,
                    da.data(), l);
      kernels::gemm(true, false, l, c, p, 1.0f, a, l, dmix.data(), c, 0.0f,
                    dv.data(), c);
      for (int i = 0; i < p; ++i) {
        float* drow = da.data() + static_cast<std::size_t>(i) * l;
        const float* arow = a + static_cast<std::size_t>(i) * l;
        double dot = 0.0;
        for (int j = 0; j < l; ++j) dot += static_cast<double>(drow[j]) * arow[j];
        for (int j = 0; j < l; ++j)
          drow[j] = arow[j] * (drow[j] - static_cast<float>(dot)) * inv_sqrt;
      }
      kernels::gemm(false, false, p, c, l, 1.0f, da.data(), l, k, c, 0.0f,
                    dq.data(), c);
      kernels::gemm(true, false, l, c, p, 1.0f, da.data(), l, q, c, 0.0f,
                    dk.data(), c);
      kernels::gemm(true, false, c, c, p, 1.0f, dq.data(), c, tok, c, 1.0f,
                    dwq.data(), c);
      kernels::gemm(true, false, c, d, l, 1.0f, dk.data(), c, ctx, d, 1.0f,
                    dwk.data(), d);
      kernels::gemm(true, false, c, d, l, 1.0f, dv.data(), c, ctx, d, 1.0f,
                    dwv.data(), d);
      if (!dx.empty()) {
        kernels::gemm(false, false, p, c, c, 1.0f, dq.data(), c, wq->value.data(),
                      c, 0.0f, dtok.data(), c);
        for (int ch = 0; ch < c; ++ch) {
          float* plane = dx.plane(s, ch);
          for (int i = 0; i < p; ++i) plane[i] = dtok[i * c + ch];
        }
      }
      if (!dctx.empty()) {
        float* dc = dctx.data() + static_cast<std::size_t>(s) * l * d;
        kernels::gemm(false, false, l, d, c, 1.0f, dk.data(), c, wk->value.data(),
                      d, 0.0f, dc, d);
        kernels::gemm(false, false, l, d, c, 1.0f, dv.data(), c, wv->value.data(),
                      d, 1.0f, dc, d);
      }
    }
    if (!dx.empty()) x->accumulate(dx);
    if (!dctx.empty()) context->accumulate(dctx);
    if (wants(wq)) wq->accumulate(dwq);
    if (wants(wk)) wk->accumulate(dwk);
    if (wants(wv)) wv->accumulate(dwv);
    if (wants(wo)) wo->accumulate(dwo);
    if (bo && wants(bo)) bo->accumulate(dbo);
  });
}

Var add_broadcast_batch(const Var& x, const Var& table) {
  const Shape xs = x->value.shape();
  const std::size_t per = xs.numel() / xs.n;
  if (table->value.size() != per) {
    throw std::invalid_argument("add_broadcast_batch: table size");
  }
  Tensor y = x->value;
  for (int n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < per; ++i) y[n * per + i] += table->value[i];
  return make_node(std::move(y), {x, table}, [per](Node& self) {
    if (wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (wants(self.parents[1])) {
      Tensor& g = self.parents[1]->grad_buffer();
      const int n = self.value.shape().n;
      for (int s = 0; s < n; ++s)
        for (std::size_t i = 0; i < per; ++i) g[i] += self.grad[s * per + i];
    }
  });
}

Var grid_sample(const Tensor& source, const Var& flow) {
  Tensor y = kernels::grid_sample(source, flow->value);
  return make_node(std::move(y), {flow}, [source](Node& self) {
    const Var& f = self.parents[0];
    f->accumulate(kernels::grid_sample_backward_flow(source, f->value, self.grad));
  });
}

Var mse_loss(const Var& pred, const Tensor& target) {
  require_shape(pred->value, target, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(pred->value[i]) - target[i];
    acc += d * d;
  }
  const double count = static_cast<double>(target.size());
  Tensor y({1, 1, 1, 1}, static_cast<float>(acc / count));
  return make_node(std::move(y), {pred}, [target, count](Node& self) {
    const Var& p = self.parents[0];
    const float k = static_cast<float>(2.0 * self.grad[0] / count);
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (p->value[i] - target[i]);
    p->accumulate(g);
  });
}

Var l1_loss(const Var& pred, const Tensor& target) {
  require_shape(pred->value, target, "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc += std::abs(static_cast<double>(pred->value[i]) - target[i]);
  }
  const double count = static_cast<double>(target.size());
  Tensor y({1, 1, 1, 1}, static_cast<float>(acc / count));
  return make_node(std::move(y), {pred}, [target, count](Node& self) {
    const Var& p = self.parents[0];
    const float k = static_cast<float>(self.grad[0] / count);
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float d = p->value[i] - target[i];
      g[i] = d > 0.0f ? k : (d < 0.0f ? -k : 0.0f);
    }
    p->accumulate(g);
  });
}

Var total_variation(const Var& x) {
  const Shape s = x->value.shape();
  const double count = static_cast<double>(s.n) * s.c *
                       ((s.h - 1) * s.w + s.h * (s.w - 1));
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.plane(n, c);
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          if (xx + 1 < s.w) acc += std::abs(p[y * s.w + xx + 1] - p[y * s.w + xx]);
          if (y + 1 < s.h) acc += std::abs(p[(y + 1) * s.w + xx] - p[y * s.w + xx]);
        }
    }
  Tensor y({1, 1, 1, 1}, static_cast<float>(acc / count));
  return make_node(std::move(y), {x}, [count](Node& self) {
    const Var& in = self.parents[0];
    const Shape s = in->value.shape();
    const float k = static_cast<float>(self.grad[0] / count);
    Tensor g(s);
    auto sgn = [](float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); };
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* p = in->value.plane(n, c);
        float* d = g.plane(n, c);
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) {
            const int i = y * s.w + xx;
            if (xx + 1 < s.w) {
              const float sg = k * sgn(p[i + 1] - p[i]);
              d[i + 1] += sg;
              d[i] -= sg;
            }
            if (y + 1 < s.h) {
              const float sg = k * sgn(p[i + s.w] - p[i]);
              d[i + s.w] += sg;
              d[i] -= sg;
            }
          }
      }
    in->accumulate(g);
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& w) {
  if (terms.size() != w.size()) throw std::invalid_argument("weighted_sum");
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) acc += w[i] * terms[i]->value[0];
  Tensor y({1, 1, 1, 1}, static_cast<float>(acc));
  return make_node(std::move(y), terms, [w](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants(self.parents[i])) {
        self.parents[i]->accumulate(
            Tensor(self.parents[i]->value.shape(), self.grad[0] * w[i]));
      }
    }
  });
}

}  // namespace cascade::nn
