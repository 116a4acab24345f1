#pragma once

// Data-parallel compute kernels. Loops over batch, channel planes or rows are
// OpenMP-parallel; matrix products go through BLAS. Every kernel here has a
// serial counterpart in reference.hpp that the tests compare against.
//
// No kernel reduces floating point values across threads, so results do not
// depend on the thread count.

#include "cascade/tensor.hpp"

namespace cascade::kernels {

struct ConvGeom {
  int stride = 1;
  int pad = 1;
};

int conv_out_size(int in, int k, ConvGeom g);

/// y = conv(x, weight) + bias. weight is {Cout, Cin, k, k}; bias may be empty.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                      ConvGeom g);

/// Accumulates into dweight/dbias (which must be shaped) and, when dx is not
/// null, writes the input gradient.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     ConvGeom g, Tensor* dx, Tensor& dweight, Tensor* dbias);

/// C = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);

struct GroupNormStats {
  std::vector<float> mean;  // n * groups
  std::vector<float> rstd;
};

/// Normalized output without affine terms.
Tensor group_norm_forward(const Tensor& x, int groups, float eps,
                          GroupNormStats& stats);
/// Gradient through the normalization given d(normalized).
Tensor group_norm_backward(const Tensor& xhat, const Tensor& dxhat, int groups,
                           const GroupNormStats& stats);

/// Backward bilinear sampling with border clamping. flow is {N,2,H,W} in
/// normalized [-1,1] grid units (channel 0 = x, channel 1 = y); src is
/// {N,C,H,W} or {1,C,H,W} broadcast over the batch.
Tensor grid_sample(const Tensor& src, const Tensor& flow);
/// Gradient of grid_sample with respect to the flow.
Tensor grid_sample_backward_flow(const Tensor& src, const Tensor& flow,
                                 const Tensor& dout);

/// 2x bilinear upsampling, half-pixel centers, edge clamped.
Tensor upsample_bilinear2x(const Tensor& x);
Tensor upsample_bilinear2x_backward(const Tensor& dy, Shape in_shape);

/// Mean SSIM of two single-channel planes over all window x window blocks
/// at stride 1. Window statistics come from double-precision integral images.
double ssim_plane(const float* a, const float* b, int h, int w, int window,
                  double data_range);

}  // namespace cascade::kernels
