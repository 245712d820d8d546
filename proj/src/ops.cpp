#include "dasc/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dasc/error.hpp"

namespace dasc::ops {
namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
  const double* src = x.data();
  double* dst = out.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return out;
}

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var* bias, const kernels::ConvGeometry& g) {
  Tensor out = kernels::conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, g);
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return ad::make_op(std::move(out), std::move(inputs), [g, has_bias](ad::Node& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    Tensor dx, dw, db;
    ad::Node* bnode = has_bias ? self.inputs[2].get() : nullptr;
    kernels::conv2d_backward(xin.value, win.value, self.grad, g, xin.requires_grad ? &dx : nullptr,
                             win.requires_grad ? &dw : nullptr,
                             (bnode && bnode->requires_grad) ? &db : nullptr);
    if (xin.requires_grad) xin.accumulate(dx);
    if (win.requires_grad) win.accumulate(dw);
    if (bnode && bnode->requires_grad) bnode->accumulate(db);
  });
}

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, std::vector<double>* mean,
                     std::vector<double>* var) {
  auto cache = std::make_shared<kernels::BatchNormCache>();
  Tensor out = kernels::batch_norm_train(x.value(), gamma.value(), beta.value(), eps, *cache, var);
  if (mean) *mean = cache->mean;
  return ad::make_op(std::move(out), {x, gamma, beta}, [cache](ad::Node& self) {
    Tensor dx, dg, db;
    kernels::batch_norm_backward(self.grad, self.inputs[1]->value, *cache, dx, dg, db);
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(dx);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(dg);
    if (self.inputs[2]->requires_grad) self.inputs[2]->accumulate(db);
  });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps) {
  Tensor out = kernels::batch_norm_eval(x.value(), gamma.value(), beta.value(), running_mean, running_var, eps);
  std::vector<double> inv(running_var.size());
  for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / std::sqrt(running_var[c] + eps);
  Tensor rm = running_mean;
  return ad::make_op(std::move(out), {x, gamma, beta}, [inv, rm](ad::Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    const int n = xv.n(), c = xv.c();
    const std::size_t p = xv.plane();
    Tensor dx(xv.shape()), dg({c}), db({c});
    for (int ch = 0; ch < c; ++ch) {
      double sg = 0.0, sgx = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * p;
        for (std::size_t k = 0; k < p; ++k) {
          const double g = self.grad[off + k];
          dx[off + k] = g * gv[ch] * inv[ch];
          sg += g;
          sgx += g * (xv[off + k] - rm[ch]) * inv[ch];
        }
      }
      dg[ch] = sgx;
      db[ch] = sg;
    }
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(dx);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(dg);
    if (self.inputs[2]->requires_grad) self.inputs[2]->accumulate(db);
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, double slope) {
  Tensor out = map_unary(x.value(), [slope](double v) { return v > 0 ? v : slope * v; });
  return ad::make_op(std::move(out), {x}, [slope](ad::Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    Tensor dx(xv.shape());
    const std::size_t n = xv.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) dx[i] = xv[i] > 0 ? self.grad[i] : slope * self.grad[i];
    self.inputs[0]->accumulate(dx);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = map_unary(x.value(), stable_sigmoid);
  return ad::make_op(out, {x}, [out](ad::Node& self) {
    Tensor dx(out.shape());
    const std::size_t n = out.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) dx[i] = self.grad[i] * out[i] * (1.0 - out[i]);
    self.inputs[0]->accumulate(dx);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return ad::make_op(std::move(out), {a, b}, [](ad::Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return ad::make_op(std::move(out), {a, b}, [](ad::Node& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor d(an.value.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = self.grad[i] * bn.value[i];
      an.accumulate(d);
    }
    if (bn.requires_grad) {
      Tensor d(bn.value.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = self.grad[i] * an.value[i];
      bn.accumulate(d);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = map_unary(a.value(), [s](double v) { return v * s; });
  return ad::make_op(std::move(out), {a}, [s](ad::Node& self) {
    self.inputs[0]->accumulate(map_unary(self.grad, [s](double g) { return g * s; }));
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = map_unary(a.value(), [s](double v) { return v + s; });
  return ad::make_op(std::move(out), {a}, [](ad::Node& self) { self.inputs[0]->accumulate(self.grad); });
}

Var mul_channel_broadcast(const Var& x, const Var& f) {
  const Tensor& xv = x.value();
  const Tensor& fv = f.value();
  if (xv.rank() != 4 || fv.rank() != 4 || fv.c() != 1 || fv.n() != xv.n() || fv.h() != xv.h() ||
      fv.w() != xv.w()) {
    throw ShapeError("mul_channel_broadcast: factor " + shape_str(fv.shape()) + " not aligned with " +
                     shape_str(xv.shape()));
  }
  const int n = xv.n(), c = xv.c();
  const std::size_t p = xv.plane();
  Tensor out(xv.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < p; ++k)
        out[(static_cast<std::size_t>(i) * c + ch) * p + k] =
            xv[(static_cast<std::size_t>(i) * c + ch) * p + k] * fv[static_cast<std::size_t>(i) * p + k];
  return ad::make_op(std::move(out), {x, f}, [n, c, p](ad::Node& self) {
    auto& xn = *self.inputs[0];
    auto& fn = *self.inputs[1];
    if (xn.requires_grad) {
      Tensor d(xn.value.shape());
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t k = 0; k < p; ++k) {
            const std::size_t o = (static_cast<std::size_t>(i) * c + ch) * p + k;
            d[o] = self.grad[o] * fn.value[static_cast<std::size_t>(i) * p + k];
          }
      xn.accumulate(d);
    }
    if (fn.requires_grad) {
      Tensor d(fn.value.shape());
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t k = 0; k < p; ++k) {
            const std::size_t o = (static_cast<std::size_t>(i) * c + ch) * p + k;
            d[static_cast<std::size_t>(i) * p + k] += self.grad[o] * xn.value[o];
          }
      fn.accumulate(d);
    }
  });
}

Var maxpool2d(const Var& x, int kernel, int stride, int pad) {
  auto argmax = std::make_shared<std::vector<int>>();
  Tensor out = kernels::maxpool_forward(x.value(), kernel, stride, pad, *argmax);
  return ad::make_op(std::move(out), {x}, [argmax](ad::Node& self) {
    self.inputs[0]->accumulate(kernels::maxpool_backward(self.grad, self.inputs[0]->value.shape(), *argmax));
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  if (x.value().h() == out_h && x.value().w() == out_w) return x;
  Tensor out = kernels::resize_bilinear(x.value(), out_h, out_w);
  return ad::make_op(std::move(out), {x}, [](ad::Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    self.inputs[0]->accumulate(kernels::resize_bilinear_backward(self.grad, xv.h(), xv.w()));
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = parts[0].value();
  int total = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 4 || v.n() != first.n() || v.h() != first.h() || v.w() != first.w()) {
      throw ShapeError("concat_channels: spatial/batch mismatch " + shape_str(v.shape()) + " vs " +
                       shape_str(first.shape()));
    }
    total += v.c();
  }
  const int n = first.n();
  const std::size_t pl = first.plane();
  Tensor out({n, total, first.h(), first.w()});
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Tensor& v = p.value();
    for (int i = 0; i < n; ++i) {
      std::copy(v.data() + static_cast<std::size_t>(i) * v.c() * pl,
                v.data() + static_cast<std::size_t>(i + 1) * v.c() * pl,
                out.data() + (static_cast<std::size_t>(i) * total + off) * pl);
    }
    off += v.c();
  }
  return ad::make_op(std::move(out), parts, [offsets, total, n, pl](ad::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const int c = in.value.c();
      Tensor d(in.value.shape());
      for (int i = 0; i < n; ++i) {
        const double* src = self.grad.data() + (static_cast<std::size_t>(i) * total + offsets[k]) * pl;
        std::copy(src, src + c * pl, d.data() + static_cast<std::size_t>(i) * c * pl);
      }
      in.accumulate(d);
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  const int n = xv.n(), c = xv.c();
  const std::size_t p = xv.plane();
  Tensor out({n, c, 1, 1});
  for (int i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < p; ++k) s += xv[static_cast<std::size_t>(i) * p + k];
    out[i] = s / static_cast<double>(p);
  }
  return ad::make_op(std::move(out), {x}, [n, c, p](ad::Node& self) {
    Tensor d(self.inputs[0]->value.shape());
    for (int i = 0; i < n * c; ++i)
      for (std::size_t k = 0; k < p; ++k) d[static_cast<std::size_t>(i) * p + k] = self.grad[i] / static_cast<double>(p);
    self.inputs[0]->accumulate(d);
  });
}

Var softmax_channels(const Var& x) {
  const Tensor& xv = x.value();
  const int n = xv.n(), c = xv.c();
  const std::size_t p = xv.plane();
  Tensor out(xv.shape());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const std::size_t base = static_cast<std::size_t>(i) * c * p + k;
      double m = xv[base];
      for (int ch = 1; ch < c; ++ch) m = std::max(m, xv[base + ch * p]);
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) s += std::exp(xv[base + ch * p] - m);
      for (int ch = 0; ch < c; ++ch) out[base + ch * p] = std::exp(xv[base + ch * p] - m) / s;
    }
  }
  return ad::make_op(out, {x}, [out, n, c, p](ad::Node& self) {
    Tensor d(out.shape());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t base = static_cast<std::size_t>(i) * c * p + k;
        double dot = 0.0;
        for (int ch = 0; ch < c; ++ch) dot += self.grad[base + ch * p] * out[base + ch * p];
        for (int ch = 0; ch < c; ++ch) d[base + ch * p] = out[base + ch * p] * (self.grad[base + ch * p] - dot);
      }
    }
    self.inputs[0]->accumulate(d);
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().vec()) s += v;
  return ad::make_op(Tensor({1}, s), {x}, [](ad::Node& self) {
    self.inputs[0]->accumulate(Tensor(self.inputs[0]->value.shape(), self.grad[0]));
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  double s = 0.0;
  std::vector<Var> inputs;
  std::vector<double> weights;
  for (const auto& [w, v] : terms) {
    if (v.value().size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    s += w * v.item();
    inputs.push_back(v);
    weights.push_back(w);
  }
  return ad::make_op(Tensor({1}, s), inputs, [weights](ad::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (self.inputs[k]->requires_grad) self.inputs[k]->accumulate(Tensor({1}, weights[k] * self.grad[0]));
    }
  });
}

Var cosine_discrepancy(const Var& p1, const Var& p2) {
  require_same(p1, p2, "cosine_discrepancy");
  const Tensor& a = p1.value();
  const Tensor& b = p2.value();
  const int n = a.n(), c = a.c();
  const std::size_t p = a.plane();
  Tensor out({n, 1, a.h(), a.w()});
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const std::size_t base = static_cast<std::size_t>(i) * c * p + k;
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        dot += a[base + ch * p] * b[base + ch * p];
        na += a[base + ch * p] * a[base + ch * p];
        nb += b[base + ch * p] * b[base + ch * p];
      }
      out[static_cast<std::size_t>(i) * p + k] = (na > 0 && nb > 0) ? 1.0 - dot / std::sqrt(na * nb) : 0.0;
    }
  }
  return ad::make_op(std::move(out), {p1, p2}, [n, c, p](ad::Node& self) {
    const Tensor& a = self.inputs[0]->value;
    const Tensor& b = self.inputs[1]->value;
    Tensor da(a.shape()), db(b.shape());
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t base = static_cast<std::size_t>(i) * c * p + k;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          dot += a[base + ch * p] * b[base + ch * p];
          na += a[base + ch * p] * a[base + ch * p];
          nb += b[base + ch * p] * b[base + ch * p];
        }
        if (!(na > 0 && nb > 0)) continue;
        const double g = self.grad[static_cast<std::size_t>(i) * p + k];
        const double la = std::sqrt(na), lb = std::sqrt(nb);
        const double cosv = dot / (la * lb);
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t o = base + ch * p;
          // d(1 - cos)/da = -(b/(|a||b|) - cos * a/|a|^2)
          da[o] = -g * (b[o] / (la * lb) - cosv * a[o] / na);
          db[o] = -g * (a[o] / (la * lb) - cosv * b[o] / nb);
        }
      }
    }
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(da);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(db);
  });
}

Var cosine_similarity_flat(const std::vector<Var>& a, const std::vector<Var>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity_flat: part count mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    require_same(a[k], b[k], "cosine_similarity_flat");
    const Tensor& x = a[k].value();
    const Tensor& y = b[k].value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      dot += x[i] * y[i];
      na += x[i] * x[i];
      nb += y[i] * y[i];
    }
  }
  if (!(na > 0) || !(nb > 0)) throw NumericalError("cosine_similarity_flat: zero-norm weight vector");
  const double la = std::sqrt(na), lb = std::sqrt(nb);
  const double cosv = dot / (la * lb);
  std::vector<Var> inputs(a);
  inputs.insert(inputs.end(), b.begin(), b.end());
  const std::size_t half = a.size();
  return ad::make_op(Tensor({1}, cosv), inputs, [half, la, lb, na, nb, cosv](ad::Node& self) {
    const double g = self.grad[0];
    for (std::size_t k = 0; k < half; ++k) {
      auto& an = *self.inputs[k];
      auto& bn = *self.inputs[k + half];
      if (an.requires_grad) {
        Tensor d(an.value.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * (bn.value[i] / (la * lb) - cosv * an.value[i] / na);
        an.accumulate(d);
      }
      if (bn.requires_grad) {
        Tensor d(bn.value.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * (an.value[i] / (la * lb) - cosv * bn.value[i] / nb);
        bn.accumulate(d);
      }
    }
  });
}

Var cross_entropy_2class(const Var& logits, const Tensor& fg_target) {
  const Tensor& z = logits.value();
  if (z.rank() != 4 || z.c() != 2) throw ShapeError("cross_entropy_2class: logits must be (N,2,H,W)");
  fg_target.require_shape({z.n(), 1, z.h(), z.w()}, "cross_entropy_2class target");
  const int n = z.n();
  const std::size_t p = z.plane();
  const double count = static_cast<double>(n) * p;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const double z0 = z[static_cast<std::size_t>(i) * 2 * p + k];
      const double z1 = z[static_cast<std::size_t>(i) * 2 * p + p + k];
      const double t = fg_target[static_cast<std::size_t>(i) * p + k];
      const double m = std::max(z0, z1);
      const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
      total += -(t * (z1 - lse) + (1.0 - t) * (z0 - lse));
    }
  }
  Tensor target = fg_target;
  return ad::make_op(Tensor({1}, total / count), {logits}, [target, n, p, count](ad::Node& self) {
    const Tensor& z = self.inputs[0]->value;
    Tensor d(z.shape());
    const double g = self.grad[0] / count;
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t i0 = static_cast<std::size_t>(i) * 2 * p + k, i1 = i0 + p;
        const double m = std::max(z[i0], z[i1]);
        const double e0 = std::exp(z[i0] - m), e1 = std::exp(z[i1] - m);
        const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
        const double t = target[static_cast<std::size_t>(i) * p + k];
        d[i0] = g * (p0 - (1.0 - t));
        d[i1] = g * (p1 - t);
      }
    }
    self.inputs[0]->accumulate(d);
  });
}

Var bce_with_logits(const Var& scores, double label, const Tensor* weights) {
  const Tensor& s = scores.value();
  if (weights && weights->shape() != s.shape()) {
    throw ShapeError("bce_with_logits: weights " + shape_str(weights->shape()) + " vs scores " +
                     shape_str(s.shape()));
  }
  const double count = static_cast<double>(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = s[i];
    const double l = std::max(v, 0.0) - v * label + std::log1p(std::exp(-std::abs(v)));
    total += (weights ? (*weights)[i] : 1.0) * l;
  }
  Tensor w = weights ? *weights : Tensor();
  return ad::make_op(Tensor({1}, total / count), {scores}, [w, label, count](ad::Node& self) {
    const Tensor& s = self.inputs[0]->value;
    Tensor d(s.shape());
    const double g = self.grad[0] / count;
    for (std::size_t i = 0; i < s.size(); ++i) {
      d[i] = g * (w.empty() ? 1.0 : w[i]) * (stable_sigmoid(s[i]) - label);
    }
    self.inputs[0]->accumulate(d);
  });
}

Var nll_of_probs(const Var& probs, const std::vector<int>& tags) {
  const Tensor& pv = probs.value();
  const int n = pv.dim(0);
  const int m = pv.dim(1);
  if (static_cast<int>(tags.size()) != n) throw ShapeError("nll_of_probs: tag count mismatch");
  if (pv.size() != static_cast<std::size_t>(n) * m) throw ShapeError("nll_of_probs: expected (N,M[,1,1]) probs");
  static constexpr double kFloor = 1e-300;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (tags[i] < 0 || tags[i] >= m) throw ConfigError("nll_of_probs: tag out of range");
    total -= std::log(std::max(pv[static_cast<std::size_t>(i) * m + tags[i]], kFloor));
  }
  return ad::make_op(Tensor({1}, total / n), {probs}, [tags, n, m](ad::Node& self) {
    const Tensor& pv = self.inputs[0]->value;
    Tensor d(pv.shape());
    for (int i = 0; i < n; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * m + tags[i];
      d[o] = -self.grad[0] / (n * std::max(pv[o], kFloor));
    }
    self.inputs[0]->accumulate(d);
  });
}

}  // namespace dasc::ops
