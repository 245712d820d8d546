#include "dasc/nn.hpp"

#include <cmath>

#include "dasc/ops.hpp"

namespace dasc::nn {

std::vector<NamedTensor> Module::named_tensors(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  enumerate(prefix, out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& t : named_tensors())
    if (t.trainable()) out.push_back(t.var);
  return out;
}

void Module::set_requires_grad(bool on) const {
  for (auto& t : named_tensors())
    if (t.trainable()) t.var.set_requires_grad(on);
}

void Module::zero_grad() const {
  for (auto& t : named_tensors()) t.var.zero_grad();
}

Conv2d::Conv2d(const Conv2dOptions& opts, Rng& rng) : opts_(opts) {
  const int fan_in = opts.in_channels * opts.kernel * opts.kernel;
  const double std_dev = std::sqrt(2.0 / fan_in);
  Tensor w({opts.out_channels, opts.in_channels, opts.kernel, opts.kernel});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std_dev * standard_normal(rng);
  weight_ = ad::parameter(std::move(w));
  if (opts.bias) bias_ = ad::parameter(Tensor({opts.out_channels}));
}

Var Conv2d::forward(const Var& x) const {
  kernels::ConvGeometry g = opts_.same_padding
                                ? kernels::ConvGeometry::same(x.value().h(), x.value().w(), opts_.kernel,
                                                              opts_.stride, opts_.dilation)
                                : kernels::ConvGeometry::symmetric(opts_.padding, opts_.stride, opts_.dilation);
  return ops::conv2d(x, weight_, bias_.defined() ? &bias_ : nullptr, g);
}

void Conv2d::enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "weight", weight_, TensorKind::kConvWeight});
  if (bias_.defined()) out.push_back({prefix + "bias", bias_, TensorKind::kBias});
}

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : momentum_(momentum),
      eps_(eps),
      gamma_(ad::parameter(Tensor({channels}, 1.0))),
      beta_(ad::parameter(Tensor({channels}, 0.0))),
      running_mean_(ad::constant(Tensor({channels}, 0.0))),
      running_var_(ad::constant(Tensor({channels}, 1.0))) {}

Var BatchNorm2d::forward(const Var& x, bool train) const {
  if (!train) return ops::batch_norm_eval(x, gamma_, beta_, running_mean_.value(), running_var_.value(), eps_);
  std::vector<double> mean, var;
  Var out = ops::batch_norm_train(x, gamma_, beta_, eps_, &mean, &var);
  const double count = static_cast<double>(x.value().n()) * x.value().plane();
  const double unbias = count > 1 ? count / (count - 1) : 1.0;
  Tensor& rm = running_mean_.mutable_value();
  Tensor& rv = running_var_.mutable_value();
  for (std::size_t c = 0; c < mean.size(); ++c) {
    rm[c] = (1.0 - momentum_) * rm[c] + momentum_ * mean[c];
    rv[c] = (1.0 - momentum_) * rv[c] + momentum_ * var[c] * unbias;
  }
  return out;
}

void BatchNorm2d::enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "gamma", gamma_, TensorKind::kNormWeight});
  out.push_back({prefix + "beta", beta_, TensorKind::kNormBias});
  out.push_back({prefix + "running_mean", running_mean_, TensorKind::kRunningStat});
  out.push_back({prefix + "running_var", running_var_, TensorKind::kRunningStat});
}

ConvBnAct::ConvBnAct(const Conv2dOptions& opts, bool relu, Rng& rng)
    : conv_(opts, rng), bn_(opts.out_channels), relu_(relu) {}

Var ConvBnAct::forward(const Var& x, bool train) const {
  Var y = bn_.forward(conv_.forward(x), train);
  return relu_ ? ops::relu(y) : y;
}

void ConvBnAct::enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv_.enumerate(prefix + "conv.", out);
  bn_.enumerate(prefix + "bn.", out);
}

}  // namespace dasc::nn
