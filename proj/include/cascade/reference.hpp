#pragma once

// Straightforward serial implementations of the kernels in kernels.hpp.
// Slow and obviously correct; used by tests and by the benchmark target.

#include "cascade/kernels.hpp"

namespace cascade::reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                      kernels::ConvGeom g);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     kernels::ConvGeom g, Tensor& dx, Tensor& dweight,
                     Tensor& dbias);

Tensor group_norm_forward(const Tensor& x, int groups, float eps);

Tensor grid_sample(const Tensor& src, const Tensor& flow);

Tensor upsample_bilinear2x(const Tensor& x);

/// Explicit per-window loops, no integral images.
double ssim_plane(const float* a, const float* b, int h, int w, int window,
                  double data_range);

}  // namespace cascade::reference
