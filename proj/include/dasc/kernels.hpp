#pragma once

// Data-parallel compute kernels (OpenMP). Every kernel parallelizes only over
// independent outputs, so results are bitwise identical for any thread count.
// Serial direct-loop counterparts live in reference.hpp.

#include <vector>

#include "dasc/tensor.hpp"

namespace dasc::kernels {

struct ConvGeometry {
  int stride = 1;
  int dilation = 1;
  int pad_top = 0;
  int pad_bottom = 0;
  int pad_left = 0;
  int pad_right = 0;

  static ConvGeometry symmetric(int pad, int stride = 1, int dilation = 1) {
    return {stride, dilation, pad, pad, pad, pad};
  }
  /// Padding that yields ceil(in / stride) outputs per axis; extra padding goes
  /// to the bottom/right.
  static ConvGeometry same(int in_h, int in_w, int kernel, int stride, int dilation = 1);

  int out_h(int in_h, int kernel) const;
  int out_w(int in_w, int kernel) const;
};

/// x: (N,C,H,W), weight: (O,C,kh,kw), bias: (O) or null.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g);

/// Any of dx/dweight/dbias may be null. Outputs are overwritten.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dweight, Tensor* dbias);

/// Bilinear resampling with half-pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w);

struct BatchNormCache {
  std::vector<double> mean;
  std::vector<double> inv_std;
  Tensor xhat;
};

/// Normalizes with batch statistics over (N,H,W). Also returns the biased batch
/// variance per channel through `batch_var` when non-null.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormCache& cache, std::vector<double>* batch_var);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps);
void batch_norm_backward(const Tensor& dy, const Tensor& gamma, const BatchNormCache& cache, Tensor& dx,
                         Tensor& dgamma, Tensor& dbeta);

/// Max pooling; argmax receives the flat input-plane index of each output.
Tensor maxpool_forward(const Tensor& x, int kernel, int stride, int pad, std::vector<int>& argmax);
Tensor maxpool_backward(const Tensor& dy, const Shape& in_shape, const std::vector<int>& argmax);

}  // namespace dasc::kernels
