#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cascade/nn/ops.hpp"
#include "cascade/rng.hpp"

namespace cascade::nn {

/// Ordered collection of named trainable parameters. Names are stable and
/// double as checkpoint keys.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
         int stride, Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const;
  int out_channels() const { return cout_; }

 private:
  Var weight_;
  Var bias_;
  kernels::ConvGeom geom_{};
  int cout_ = 0;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false);
  Var operator()(const Var& x) const;

 private:
  Var weight_;
  Var bias_;
};

class GroupNorm {
 public:
  GroupNorm() = default;
  /// affine=false gives a plain normalization for external modulation.
  GroupNorm(ParamStore& ps, const std::string& name, int channels,
            bool affine = true);
  Var operator()(const Var& x) const;

 private:
  Var gamma_;
  Var beta_;
  int groups_ = 1;
};

/// Largest group count <= 8 that divides the channel count.
int default_groups(int channels);

/// Pre-activation residual block with an additive embedding injection.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamStore& ps, const std::string& name, int cin, int cout,
           int emb_dim, Rng& rng);
  Var operator()(const Var& x, const Var& emb) const;

 private:
  GroupNorm norm1_, norm2_;
  Conv2d conv1_, conv2_;
  Linear emb_proj_;
  Conv2d skip_;
  bool has_skip_ = false;
};

/// Pre-norm cross-attention block with residual; context tokens are keys and
/// values.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& name, int channels,
                      int context_dim, Rng& rng);
  Var operator()(const Var& x, const Var& context) const;

 private:
  GroupNorm norm_;
  Var wq_, wk_, wv_, wo_, bo_;
};

class Adam {
 public:
  struct Options {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float clip_norm = 1.0f;  // <= 0 disables clipping
  };
  Adam(const ParamStore& ps, Options opt);
  /// Applies one update from the accumulated gradients; returns the
  /// pre-clipping gradient norm.
  double step(float lr_scale = 1.0f);

 private:
  const ParamStore& ps_;
  Options opt_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace cascade::nn
