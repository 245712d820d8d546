#pragma once

#include <string>
#include <vector>

#include "dasc/autograd.hpp"
#include "dasc/kernels.hpp"
#include "dasc/rng.hpp"

namespace dasc::nn {

using ad::Var;

enum class TensorKind { kConvWeight, kBias, kNormWeight, kNormBias, kRunningStat };

struct NamedTensor {
  std::string name;
  Var var;
  TensorKind kind;
  bool trainable() const { return kind != TensorKind::kRunningStat; }
};

/// Anything that owns named tensors.
class Module {
 public:
  virtual ~Module() = default;
  virtual void enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const = 0;

  std::vector<NamedTensor> named_tensors(const std::string& prefix = "") const;
  std::vector<Var> parameters() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;
};

struct Conv2dOptions {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  /// Pads so the output is ceil(in / stride) per axis; overrides `padding`.
  bool same_padding = false;
  bool bias = false;
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(const Conv2dOptions& opts, Rng& rng);

  Var forward(const Var& x) const;
  void enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  const Conv2dOptions& options() const { return opts_; }
  const Var& weight() const { return weight_; }

 private:
  Conv2dOptions opts_;
  Var weight_;
  Var bias_;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  /// Training mode normalizes with batch statistics and updates the running
  /// estimates; evaluation mode uses the running estimates.
  Var forward(const Var& x, bool train) const;
  void enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const override;

  const Var& gamma() const { return gamma_; }
  const Var& beta() const { return beta_; }

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  Var gamma_, beta_;
  Var running_mean_, running_var_;
};

/// conv -> batch norm -> optional ReLU.
class ConvBnAct : public Module {
 public:
  ConvBnAct() = default;
  ConvBnAct(const Conv2dOptions& opts, bool relu, Rng& rng);
  Var forward(const Var& x, bool train) const;
  void enumerate(const std::string& prefix, std::vector<NamedTensor>& out) const override;

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  bool relu_ = true;
};

}  // namespace dasc::nn
