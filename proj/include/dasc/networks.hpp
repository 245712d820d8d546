#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dasc/nn.hpp"
#include "dasc/params.hpp"

namespace dasc {

using ad::Var;

enum class ArchPreset { kPaper, kSmall };

std::string preset_name(ArchPreset p);
ArchPreset preset_from_name(const std::string& name);

/// Widths, depths and rates of every network. The encoder always has output
/// stride 8: stem stride 2, max-pool stride 2, stage 2 stride 2, stages 3 and 4
/// dilated by 2 and 4.
struct ArchConfig {
  ArchPreset preset = ArchPreset::kSmall;
  int height = 64;
  int width = 64;
  int in_channels = 1;
  int stem_channels = 16;
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  std::array<int, 4> stage_blocks{2, 2, 2, 2};
  int aspp_channels = 32;
  std::array<int, 3> aspp_rates{2, 4, 6};
  int low_level_channels = 8;
  int decoder_channels = 32;
  int aux_channels = 32;
  std::array<int, 4> mask_disc_channels{16, 32, 64, 128};
  std::array<int, 4> feature_disc_channels{64, 32, 16, 16};

  static constexpr int kOutputStride = 8;
  static constexpr int kClasses = 2;

  static ArchConfig paper(int height = 320, int width = 320);
  static ArchConfig small(int height = 64, int width = 64);
  static ArchConfig for_preset(ArchPreset p, int height, int width);

  /// Throws ConfigError when the resolution is not divisible by the output stride.
  void validate() const;
};

/// Outputs of the four residual stages.
struct FeaturePyramid {
  Var f1, f2, f3, f4;
};

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int in_channels, int out_channels, int stride, int dilation, Rng& rng);
  Var forward(const Var& x, bool train) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  nn::ConvBnAct conv1_, conv2_;
  std::optional<nn::ConvBnAct> shortcut_;
};

/// Dilated residual encoder.
class Encoder : public nn::Module {
 public:
  Encoder(const ArchConfig& arch, Rng& rng);
  /// images: (N, in_channels, H, W) at the configured resolution.
  FeaturePyramid forward(const Var& images, bool train) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  ArchConfig arch_;
  nn::ConvBnAct stem_;
  std::vector<std::vector<BasicBlock>> stages_;
};

/// ASPP context head over f4 fused with a low-level skip from f1.
class MajorDecoder : public nn::Module {
 public:
  MajorDecoder(const ArchConfig& arch, Rng& rng);
  /// Plain decoder logits at (out_h, out_w).
  Var forward_plain(const FeaturePyramid& pyr, int out_h, int out_w, bool train) const;
  /// Attention-modulated logits: (1 + sigmoid(cam)) * plain. cam: (N,1,out_h,out_w).
  Var forward(const FeaturePyramid& pyr, const Var& cam, bool train) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  std::vector<nn::ConvBnAct> branches_;
  nn::Conv2d pool_conv_;
  nn::ConvBnAct project_, low_level_, fuse1_, fuse2_;
  nn::Conv2d classifier_;
};

/// Applies the CAM attention factor to plain logits.
Var apply_cam_attention(const Var& plain_logits, const Var& cam);

class AuxDecoder : public nn::Module {
 public:
  AuxDecoder(const ArchConfig& arch, Rng& rng);
  Var forward(const FeaturePyramid& pyr, int out_h, int out_w, bool train) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  nn::ConvBnAct hidden_;
  nn::Conv2d classifier_;
};

struct CamOutput {
  Var logits;     // (N,2,1,1)
  Var probs;      // (N,2,1,1), rows sum to 1
  Tensor cam_low; // (N,1,h4,w4) positive-class response before pooling
  Tensor cam;     // (N,1,H,W) bilinear upsample of cam_low
};

/// Image-level classifier whose 1x1 head doubles as the CAM generator.
class CamExtractor : public nn::Module {
 public:
  CamExtractor(const ArchConfig& arch, Rng& rng);
  CamOutput forward(const Var& images, bool train) const;
  /// Convenience: CAM at input resolution in evaluation mode, no gradients.
  Tensor cam(const Tensor& images) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  Encoder encoder_;
  nn::Conv2d classifier_;
};

/// Five stride-2 4x4 convolutions with leaky ReLU between them.
class DiscriminatorStack : public nn::Module {
 public:
  DiscriminatorStack(int in_channels, const std::array<int, 4>& channels, Rng& rng);
  Var forward(const Var& x) const;
  int in_channels() const { return in_channels_; }
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  int in_channels_;
  std::vector<nn::Conv2d> convs_;
};

class MaskDiscriminator : public nn::Module {
 public:
  MaskDiscriminator(const ArchConfig& arch, Rng& rng);
  /// prob_sum: (N,2,H,W) -> raw scores (N,1,H,W).
  Var forward(const Var& prob_sum) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  DiscriminatorStack stack_;
};

class FeatureDiscriminator : public nn::Module {
 public:
  FeatureDiscriminator(const ArchConfig& arch, Rng& rng);
  FeatureDiscriminator(int in_channels, const std::array<int, 4>& channels, Rng& rng);
  /// f2 and f3 are resized to f1's spatial size and concatenated.
  Var forward(const Var& f1, const Var& f2, const Var& f3) const;
  void enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const override;

 private:
  DiscriminatorStack stack_;
};

/// Encoder, major decoder and the two auxiliary decoders (the generator).
struct SegmentationOutput {
  FeaturePyramid pyramid;
  Var p0;  // major head, attention applied when a CAM was given
  Var p1;
  Var p2;
};

class SegmentationNet {
 public:
  SegmentationNet(const ArchConfig& arch, std::uint64_t seed);

  /// cam may be null, in which case P0 is the plain major decoder output.
  SegmentationOutput forward(const Var& images, const Tensor* cam, bool train) const;

  const ArchConfig& arch() const { return arch_; }
  const Encoder& encoder() const { return encoder_; }
  const MajorDecoder& major() const { return major_; }
  const AuxDecoder& aux1() const { return aux1_; }
  const AuxDecoder& aux2() const { return aux2_; }
  ModuleGroup group() const;
  std::vector<Var> parameters() const;

 private:
  ArchConfig arch_;
  Encoder encoder_;
  MajorDecoder major_;
  AuxDecoder aux1_, aux2_;
};

/// Generator plus CAM extractor: the unit that is aggregated across
/// self-correction cycles.
class DascModel {
 public:
  DascModel(const ArchConfig& arch, std::uint64_t seed);

  const ArchConfig& arch() const { return net.arch(); }
  ModuleGroup group() const;
  ParameterVector params() const { return get_params(group()); }
  void load(const ParameterVector& p) const { set_params(group(), p); }

  /// Foreground probability of the major head in evaluation mode: (N,1,H,W).
  Tensor predict_foreground(const Tensor& images, bool cam_attention = true) const;

  SegmentationNet net;
  CamExtractor cam;
};

struct Discriminators {
  Discriminators(const ArchConfig& arch, std::uint64_t seed);
  ModuleGroup group() const;

  MaskDiscriminator mask;
  FeatureDiscriminator feature;
};

/// Conv weights of a module, in enumeration order.
std::vector<Var> conv_weights(const nn::Module& module);

}  // namespace dasc
