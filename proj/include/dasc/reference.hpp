#pragma once

// Serial direct-loop kernels. These are the readable definitions the parallel
// kernels in kernels.hpp are tested and benchmarked against; they are not used
// on any training path.

#include "dasc/kernels.hpp"
#include "dasc/tensor.hpp"

namespace dasc::ref {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const kernels::ConvGeometry& g);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const kernels::ConvGeometry& g,
                     Tensor& dx, Tensor& dweight, Tensor& dbias);

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor maxpool_forward(const Tensor& x, int kernel, int stride, int pad);

}  // namespace dasc::ref
