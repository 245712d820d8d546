#include "dasc/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dasc::ref {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const kernels::ConvGeometry& g) {
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const int o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int oh = g.out_h(h, kh), ow = g.out_w(w, kw);
  Tensor out({n, o, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          double s = bias ? (*bias)[oc] : 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = y * g.stride - g.pad_top + i * g.dilation;
                const int ix = xo * g.stride - g.pad_left + j * g.dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                s += weight.at(oc, ic, i, j) * x.at(b, ic, iy, ix);
              }
          out.at(b, oc, y, xo) = s;
        }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const kernels::ConvGeometry& g,
                     Tensor& dx, Tensor& dweight, Tensor& dbias) {
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const int o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int oh = dy.h(), ow = dy.w();
  dx = Tensor(x.shape());
  dweight = Tensor(weight.shape());
  dbias = Tensor({o});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          const double gv = dy.at(b, oc, y, xo);
          dbias[oc] += gv;
          for (int ic = 0; ic < c; ++ic)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = y * g.stride - g.pad_top + i * g.dilation;
                const int ix = xo * g.stride - g.pad_left + j * g.dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                dweight.at(oc, ic, i, j) += gv * x.at(b, ic, iy, ix);
                dx.at(b, ic, iy, ix) += gv * weight.at(oc, ic, i, j);
              }
        }
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  const int h = x.h(), w = x.w();
  Tensor out({x.n(), x.c(), out_h, out_w});
  auto src_coord = [](int o, int in, int out) {
    const double s = (o + 0.5) * in / out - 0.5;
    return std::max(s, 0.0);
  };
  for (int b = 0; b < x.n(); ++b)
    for (int ch = 0; ch < x.c(); ++ch)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const double sy = src_coord(oy, h, out_h), sx = src_coord(ox, w, out_w);
          const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 1);
          const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 1);
          const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
          const double fy = sy - y0, fx = sx - x0;
          out.at(b, ch, oy, ox) = (1 - fy) * (1 - fx) * x.at(b, ch, y0, x0) + (1 - fy) * fx * x.at(b, ch, y0, x1) +
                                  fy * (1 - fx) * x.at(b, ch, y1, x0) + fy * fx * x.at(b, ch, y1, x1);
        }
  return out;
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor out(x.shape());
  const double count = static_cast<double>(x.n()) * x.h() * x.w();
  for (int ch = 0; ch < x.c(); ++ch) {
    double mean = 0.0;
    for (int b = 0; b < x.n(); ++b)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) mean += x.at(b, ch, y, xx);
    mean /= count;
    double var = 0.0;
    for (int b = 0; b < x.n(); ++b)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) var += (x.at(b, ch, y, xx) - mean) * (x.at(b, ch, y, xx) - mean);
    var /= count;
    for (int b = 0; b < x.n(); ++b)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx)
          out.at(b, ch, y, xx) = gamma[ch] * (x.at(b, ch, y, xx) - mean) / std::sqrt(var + eps) + beta[ch];
  }
  return out;
}

Tensor maxpool_forward(const Tensor& x, int kernel, int stride, int pad) {
  const int oh = (x.h() + 2 * pad - kernel) / stride + 1;
  const int ow = (x.w() + 2 * pad - kernel) / stride + 1;
  Tensor out({x.n(), x.c(), oh, ow});
  for (int b = 0; b < x.n(); ++b)
    for (int ch = 0; ch < x.c(); ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < kernel; ++i)
            for (int j = 0; j < kernel; ++j) {
              const int iy = oy * stride - pad + i, ix = ox * stride - pad + j;
              if (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w()) best = std::max(best, x.at(b, ch, iy, ix));
            }
          out.at(b, ch, oy, ox) = best;
        }
  return out;
}

}  // namespace dasc::ref
