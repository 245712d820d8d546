#include "dasc/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dasc/error.hpp"

namespace dasc::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvDims {
  int n, c, h, w, o, kh, kw, oh, ow;
  long ckk() const { return static_cast<long>(c) * kh * kw; }
  long cols() const { return static_cast<long>(n) * oh * ow; }
  long plane_out() const { return static_cast<long>(oh) * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight, const ConvGeometry& g) {
  if (x.rank() != 4 || weight.rank() != 4) throw ShapeError("conv2d: expected rank-4 input and weight");
  if (x.c() != weight.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.c()) + " != weight in-channels " +
                     std::to_string(weight.dim(1)));
  }
  ConvDims d{x.n(), x.c(), x.h(), x.w(), weight.dim(0), weight.dim(2), weight.dim(3), 0, 0};
  d.oh = g.out_h(d.h, d.kh);
  d.ow = g.out_w(d.w, d.kw);
  if (d.oh <= 0 || d.ow <= 0) {
    throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()) + " and kernel " +
                     shape_str(weight.shape()));
  }
  return d;
}

// cols layout: row (c*kh + i)*kw + j, column n*oh*ow + y*ow + x.
void im2col(const Tensor& x, const ConvDims& d, const ConvGeometry& g, std::vector<double>& cols) {
  cols.assign(static_cast<std::size_t>(d.ckk() * d.cols()), 0.0);
  const long ncols = d.cols();
  const long rows = d.ckk();
#pragma omp parallel for collapse(2) schedule(static)
  for (long r = 0; r < rows; ++r) {
    for (int n = 0; n < d.n; ++n) {
      const int c = static_cast<int>(r / (d.kh * d.kw));
      const int i = static_cast<int>((r / d.kw) % d.kh);
      const int j = static_cast<int>(r % d.kw);
      const double* src = x.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
      double* dst = cols.data() + r * ncols + static_cast<long>(n) * d.plane_out();
      for (int y = 0; y < d.oh; ++y) {
        const int iy = y * g.stride - g.pad_top + i * g.dilation;
        double* row = dst + static_cast<long>(y) * d.ow;
        if (iy < 0 || iy >= d.h) continue;
        const double* srow = src + static_cast<long>(iy) * d.w;
        for (int xo = 0; xo < d.ow; ++xo) {
          const int ix = xo * g.stride - g.pad_left + j * g.dilation;
          if (ix >= 0 && ix < d.w) row[xo] = srow[ix];
        }
      }
    }
  }
}

void col2im(const std::vector<double>& cols, const ConvDims& d, const ConvGeometry& g, Tensor& dx) {
  const long ncols = d.cols();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      double* dst = dx.data() + (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
      for (int i = 0; i < d.kh; ++i) {
        for (int j = 0; j < d.kw; ++j) {
          const long r = (static_cast<long>(c) * d.kh + i) * d.kw + j;
          const double* src = cols.data() + r * ncols + static_cast<long>(n) * d.plane_out();
          for (int y = 0; y < d.oh; ++y) {
            const int iy = y * g.stride - g.pad_top + i * g.dilation;
            if (iy < 0 || iy >= d.h) continue;
            const double* row = src + static_cast<long>(y) * d.ow;
            double* drow = dst + static_cast<long>(iy) * d.w;
            for (int xo = 0; xo < d.ow; ++xo) {
              const int ix = xo * g.stride - g.pad_left + j * g.dilation;
              if (ix >= 0 && ix < d.w) drow[ix] += row[xo];
            }
          }
        }
      }
    }
  }
}

struct AxisTable {
  std::vector<int> i0, i1;
  std::vector<double> l1;
};

AxisTable bilinear_axis(int in, int out) {
  AxisTable t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.l1.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.l1[o] = src - i0;
  }
  return t;
}

}  // namespace

ConvGeometry ConvGeometry::same(int in_h, int in_w, int kernel, int stride, int dilation) {
  auto pad_total = [&](int in) {
    const int out = (in + stride - 1) / stride;
    return std::max((out - 1) * stride + dilation * (kernel - 1) + 1 - in, 0);
  };
  const int ph = pad_total(in_h), pw = pad_total(in_w);
  return {stride, dilation, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2};
}

int ConvGeometry::out_h(int in_h, int kernel) const {
  return (in_h + pad_top + pad_bottom - dilation * (kernel - 1) - 1) / stride + 1;
}

int ConvGeometry::out_w(int in_w, int kernel) const {
  return (in_w + pad_left + pad_right - dilation * (kernel - 1) - 1) / stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
  const ConvDims d = conv_dims(x, weight, g);
  if (bias && (bias->rank() != 1 || bias->dim(0) != d.o)) throw ShapeError("conv2d: bias shape mismatch");
  std::vector<double> cols;
  im2col(x, d, g, cols);
  RowMat y(d.o, d.cols());
  ConstMapMat wm(weight.data(), d.o, d.ckk());
  ConstMapMat cm(cols.data(), d.ckk(), d.cols());
  y.noalias() = wm * cm;

  Tensor out({d.n, d.o, d.oh, d.ow});
  const long p = d.plane_out();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      const double b = bias ? (*bias)[o] : 0.0;
      const double* src = y.data() + static_cast<long>(o) * d.cols() + n * p;
      double* dst = out.data() + (static_cast<long>(n) * d.o + o) * p;
      for (long k = 0; k < p; ++k) dst[k] = src[k] + b;
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                     Tensor* dx, Tensor* dweight, Tensor* dbias) {
  const ConvDims d = conv_dims(x, weight, g);
  dy.require_shape({d.n, d.o, d.oh, d.ow}, "conv2d backward dy");
  const long p = d.plane_out();
  RowMat dym(d.o, d.cols());
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      const double* src = dy.data() + (static_cast<long>(n) * d.o + o) * p;
      std::copy(src, src + p, dym.data() + static_cast<long>(o) * d.cols() + n * p);
    }
  }
  if (dbias) {
    *dbias = Tensor({d.o});
#pragma omp parallel for schedule(static)
    for (int o = 0; o < d.o; ++o) {
      double s = 0.0;
      const double* row = dym.data() + static_cast<long>(o) * d.cols();
      for (long k = 0; k < d.cols(); ++k) s += row[k];
      (*dbias)[o] = s;
    }
  }
  if (!dx && !dweight) return;
  std::vector<double> cols;
  if (dweight) {
    im2col(x, d, g, cols);
    *dweight = Tensor(weight.shape());
    MapMat dwm(dweight->data(), d.o, d.ckk());
    ConstMapMat cm(cols.data(), d.ckk(), d.cols());
    dwm.noalias() = dym * cm.transpose();
  }
  if (dx) {
    cols.assign(static_cast<std::size_t>(d.ckk() * d.cols()), 0.0);
    MapMat dcm(cols.data(), d.ckk(), d.cols());
    ConstMapMat wm(weight.data(), d.o, d.ckk());
    dcm.noalias() = wm.transpose() * dym;
    *dx = Tensor(x.shape());
    col2im(cols, d, g, *dx);
  }
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.rank() != 4) throw ShapeError("resize_bilinear: expected rank-4 input");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: target dims must be positive");
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const AxisTable ty = bilinear_axis(h, out_h), tx = bilinear_axis(w, out_w);
  Tensor out({n, c, out_h, out_w});
  const long planes = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const double* src = x.data() + pl * h * w;
    double* dst = out.data() + pl * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const double ly1 = ty.l1[oy], ly0 = 1.0 - ly1;
      const double* r0 = src + static_cast<long>(ty.i0[oy]) * w;
      const double* r1 = src + static_cast<long>(ty.i1[oy]) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const double lx1 = tx.l1[ox], lx0 = 1.0 - lx1;
        const int x0 = tx.i0[ox], x1 = tx.i1[ox];
        dst[oy * out_w + ox] = ly0 * (lx0 * r0[x0] + lx1 * r0[x1]) + ly1 * (lx0 * r1[x0] + lx1 * r1[x1]);
      }
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w) {
  const int n = dy.n(), c = dy.c(), out_h = dy.h(), out_w = dy.w();
  const AxisTable ty = bilinear_axis(in_h, out_h), tx = bilinear_axis(in_w, out_w);
  Tensor dx({n, c, in_h, in_w});
  const long planes = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const double* g = dy.data() + pl * out_h * out_w;
    double* dst = dx.data() + pl * in_h * in_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const double ly1 = ty.l1[oy], ly0 = 1.0 - ly1;
      double* r0 = dst + static_cast<long>(ty.i0[oy]) * in_w;
      double* r1 = dst + static_cast<long>(ty.i1[oy]) * in_w;
      for (int ox = 0; ox < out_w; ++ox) {
        const double lx1 = tx.l1[ox], lx0 = 1.0 - lx1;
        const int x0 = tx.i0[ox], x1 = tx.i1[ox];
        const double v = g[oy * out_w + ox];
        r0[x0] += ly0 * lx0 * v;
        r0[x1] += ly0 * lx1 * v;
        r1[x0] += ly1 * lx0 * v;
        r1[x1] += ly1 * lx1 * v;
      }
    }
  }
  return dx;
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormCache& cache, std::vector<double>* batch_var) {
  const int n = x.n(), c = x.c();
  const long p = static_cast<long>(x.plane());
  const double count = static_cast<double>(n) * p;
  cache.mean.assign(c, 0.0);
  cache.inv_std.assign(c, 0.0);
  if (batch_var) batch_var->assign(c, 0.0);
  cache.xhat = Tensor(x.shape());
  Tensor out(x.shape());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* src = x.data() + (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) s += src[k];
    }
    const double mean = s / count;
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* src = x.data() + (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) {
        const double dlt = src[k] - mean;
        v += dlt * dlt;
      }
    }
    const double var = v / count;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.mean[ch] = mean;
    cache.inv_std[ch] = inv;
    if (batch_var) (*batch_var)[ch] = var;
    for (int i = 0; i < n; ++i) {
      const long off = (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) {
        const double xh = (x.data()[off + k] - mean) * inv;
        cache.xhat.data()[off + k] = xh;
        out.data()[off + k] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return out;
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps) {
  const int n = x.n(), c = x.c();
  const long p = static_cast<long>(x.plane());
  Tensor out(x.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(running_var[ch] + eps);
      const double scale = gamma[ch] * inv;
      const double shift = beta[ch] - running_mean[ch] * scale;
      const long off = (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) out.data()[off + k] = x.data()[off + k] * scale + shift;
    }
  }
  return out;
}

void batch_norm_backward(const Tensor& dy, const Tensor& gamma, const BatchNormCache& cache, Tensor& dx,
                         Tensor& dgamma, Tensor& dbeta) {
  const int n = dy.n(), c = dy.c();
  const long p = static_cast<long>(dy.plane());
  const double count = static_cast<double>(n) * p;
  dx = Tensor(dy.shape());
  dgamma = Tensor({c});
  dbeta = Tensor({c});
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double sg = 0.0, sgx = 0.0;
    for (int i = 0; i < n; ++i) {
      const long off = (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) {
        sg += dy.data()[off + k];
        sgx += dy.data()[off + k] * cache.xhat.data()[off + k];
      }
    }
    dbeta[ch] = sg;
    dgamma[ch] = sgx;
    const double scale = gamma[ch] * cache.inv_std[ch];
    const double mg = sg / count, mgx = sgx / count;
    for (int i = 0; i < n; ++i) {
      const long off = (static_cast<long>(i) * c + ch) * p;
      for (long k = 0; k < p; ++k) {
        dx.data()[off + k] = scale * (dy.data()[off + k] - mg - cache.xhat.data()[off + k] * mgx);
      }
    }
  }
}

Tensor maxpool_forward(const Tensor& x, int kernel, int stride, int pad, std::vector<int>& argmax) {
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const int oh = (h + 2 * pad - kernel) / stride + 1;
  const int ow = (w + 2 * pad - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("maxpool: empty output");
  Tensor out({n, c, oh, ow});
  argmax.assign(out.size(), 0);
  const long planes = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const double* src = x.data() + pl * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (int i = 0; i < kernel; ++i) {
          const int iy = oy * stride - pad + i;
          if (iy < 0 || iy >= h) continue;
          for (int j = 0; j < kernel; ++j) {
            const int ix = ox * stride - pad + j;
            if (ix < 0 || ix >= w) continue;
            const double v = src[iy * w + ix];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = iy * w + ix;
            }
          }
        }
        const long o = pl * oh * ow + static_cast<long>(oy) * ow + ox;
        out.data()[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return out;
}

Tensor maxpool_backward(const Tensor& dy, const Shape& in_shape, const std::vector<int>& argmax) {
  Tensor dx(in_shape);
  const long planes = static_cast<long>(in_shape[0]) * in_shape[1];
  const long in_plane = static_cast<long>(in_shape[2]) * in_shape[3];
  const long out_plane = static_cast<long>(dy.h()) * dy.w();
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    for (long k = 0; k < out_plane; ++k) {
      const long o = pl * out_plane + k;
      dx.data()[pl * in_plane + argmax[o]] += dy.data()[o];
    }
  }
  return dx;
}

}  // namespace dasc::kernels
