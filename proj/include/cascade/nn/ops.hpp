#pragma once

#include <vector>

#include "cascade/kernels.hpp"
#include "cascade/nn/autograd.hpp"

namespace cascade::nn {

// Differentiable operations on NCHW values. Optional Var arguments may be
// null (e.g. a bias-free convolution).

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           kernels::ConvGeom g);
/// x is {N, F...}; weight is {O, F, 1, 1}; result is {N, O, 1, 1}.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta);
/// x * (1 + scale) + shift with per-(sample, channel) scale and shift.
Var modulate(const Var& x, const Var& scale, const Var& shift);

Var silu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var leaky_relu(const Var& x, float slope = 0.2f);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);

Var concat_channels(const std::vector<Var>& parts);
Var upsample_nearest2x(const Var& x);
Var upsample_bilinear2x(const Var& x);
Var global_avg_pool(const Var& x);
/// Mean over non-overlapping 2x2 blocks.
Var avg_pool2x(const Var& x);
/// {N,C,H,W} -> {N,C*r*r,H/r,W/r}; channel c*r*r + dy*r + dx holds pixel
/// (y*r + dy, x*r + dx) of channel c.
Var pixel_unshuffle(const Var& x, int r);
/// Inverse of pixel_unshuffle.
Var pixel_shuffle(const Var& x, int r);
/// Elementwise clamp; the gradient passes only where the input is inside.
Var clamp(const Var& x, float lo, float hi);

/// Single-head cross-attention of spatial queries over context tokens.
/// x {N,C,H,W}; context {N,L,D,1}; wq,wo {C,C,1,1}; wk,wv {C,D,1,1}.
/// Returns the projected attention output (no residual).
Var cross_attention(const Var& x, const Var& context, const Var& wq,
                    const Var& wk, const Var& wv, const Var& wo,
                    const Var& bo);
/// Adds a {1,L,D,1} table to every sample of a {N,L,D,1} token batch.
Var add_broadcast_batch(const Var& x, const Var& table);

/// Backward warp of a constant source by a learned flow (gradient to flow).
Var grid_sample(const Tensor& source, const Var& flow);

Var mse_loss(const Var& pred, const Tensor& target);
Var l1_loss(const Var& pred, const Tensor& target);
/// Mean absolute difference between horizontally and vertically adjacent
/// values.
Var total_variation(const Var& x);
/// Weighted sum of scalar nodes.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& w);

}  // namespace cascade::nn
