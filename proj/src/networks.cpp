#include "dasc/networks.hpp"

#include "dasc/error.hpp"
#include "dasc/ops.hpp"

namespace dasc {

std::string preset_name(ArchPreset p) { return p == ArchPreset::kPaper ? "paper" : "small"; }

ArchPreset preset_from_name(const std::string& name) {
  if (name == "paper") return ArchPreset::kPaper;
  if (name == "small") return ArchPreset::kSmall;
  throw ConfigError("unknown architecture preset '" + name + "' (expected small|paper)");
}

ArchConfig ArchConfig::paper(int height, int width) {
  ArchConfig a;
  a.preset = ArchPreset::kPaper;
  a.height = height;
  a.width = width;
  a.stem_channels = 64;
  a.stage_channels = {64, 128, 256, 512};
  a.stage_blocks = {3, 4, 6, 3};
  a.aspp_channels = 256;
  a.aspp_rates = {12, 24, 36};
  a.low_level_channels = 48;
  a.decoder_channels = 256;
  a.aux_channels = 256;
  a.mask_disc_channels = {64, 128, 256, 512};
  a.feature_disc_channels = {256, 128, 64, 64};
  return a;
}

ArchConfig ArchConfig::small(int height, int width) {
  ArchConfig a;
  a.height = height;
  a.width = width;
  return a;
}

ArchConfig ArchConfig::for_preset(ArchPreset p, int height, int width) {
  return p == ArchPreset::kPaper ? paper(height, width) : small(height, width);
}

void ArchConfig::validate() const {
  if (height <= 0 || width <= 0 || height % kOutputStride != 0 || width % kOutputStride != 0) {
    throw ConfigError("resolution " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be positive and divisible by the output stride " + std::to_string(kOutputStride));
  }
}

namespace {

nn::Conv2dOptions conv_opts(int in, int out, int k, int stride = 1, int dilation = 1, bool bias = false) {
  nn::Conv2dOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel = k;
  o.stride = stride;
  o.dilation = dilation;
  o.padding = dilation * (k - 1) / 2;
  o.bias = bias;
  return o;
}

Rng role_rng(std::uint64_t seed, Role role) {
  return make_rng(seed, {tag(Stream::kInit), static_cast<std::uint64_t>(role)});
}

}  // namespace

BasicBlock::BasicBlock(int in_channels, int out_channels, int stride, int dilation, Rng& rng)
    : conv1_(conv_opts(in_channels, out_channels, 3, stride, dilation), true, rng),
      conv2_(conv_opts(out_channels, out_channels, 3, 1, dilation), false, rng) {
  if (stride != 1 || in_channels != out_channels) {
    shortcut_.emplace(conv_opts(in_channels, out_channels, 1, stride), false, rng);
  }
}

Var BasicBlock::forward(const Var& x, bool train) const {
  Var y = conv2_.forward(conv1_.forward(x, train), train);
  Var skip = shortcut_ ? shortcut_->forward(x, train) : x;
  return ops::relu(ops::add(y, skip));
}

void BasicBlock::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  conv1_.enumerate(prefix + "conv1.", out);
  conv2_.enumerate(prefix + "conv2.", out);
  if (shortcut_) shortcut_->enumerate(prefix + "shortcut.", out);
}

Encoder::Encoder(const ArchConfig& arch, Rng& rng)
    : arch_(arch), stem_(conv_opts(arch.in_channels, arch.stem_channels, 7, 2), true, rng) {
  constexpr std::array<int, 4> kStride{1, 2, 1, 1};
  constexpr std::array<int, 4> kDilation{1, 1, 2, 4};
  int in = arch.stem_channels;
  for (int s = 0; s < 4; ++s) {
    std::vector<BasicBlock> blocks;
    for (int b = 0; b < arch.stage_blocks[s]; ++b) {
      blocks.emplace_back(in, arch.stage_channels[s], b == 0 ? kStride[s] : 1, kDilation[s], rng);
      in = arch.stage_channels[s];
    }
    stages_.push_back(std::move(blocks));
  }
}

FeaturePyramid Encoder::forward(const Var& images, bool train) const {
  const Tensor& x = images.value();
  if (x.rank() != 4 || x.c() != arch_.in_channels || x.h() != arch_.height || x.w() != arch_.width) {
    throw ShapeError("encoder expects (N," + std::to_string(arch_.in_channels) + "," + std::to_string(arch_.height) +
                     "," + std::to_string(arch_.width) + ") input, got " + shape_str(x.shape()));
  }
  Var h = ops::maxpool2d(stem_.forward(images, train), 3, 2, 1);
  std::array<Var, 4> outs;
  for (int s = 0; s < 4; ++s) {
    for (const auto& block : stages_[s]) h = block.forward(h, train);
    outs[s] = h;
  }
  return {outs[0], outs[1], outs[2], outs[3]};
}

void Encoder::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  stem_.enumerate(prefix + "stem.", out);
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t b = 0; b < stages_[s].size(); ++b)
      stages_[s][b].enumerate(prefix + "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".", out);
}

MajorDecoder::MajorDecoder(const ArchConfig& arch, Rng& rng) {
  const int c4 = arch.stage_channels[3];
  const int a = arch.aspp_channels;
  branches_.emplace_back(conv_opts(c4, a, 1), true, rng);
  for (int r : arch.aspp_rates) branches_.emplace_back(conv_opts(c4, a, 3, 1, r), true, rng);
  pool_conv_ = nn::Conv2d(conv_opts(c4, a, 1, 1, 1, true), rng);
  project_ = nn::ConvBnAct(conv_opts(a * 5, a, 1), true, rng);
  low_level_ = nn::ConvBnAct(conv_opts(arch.stage_channels[0], arch.low_level_channels, 1), true, rng);
  fuse1_ = nn::ConvBnAct(conv_opts(a + arch.low_level_channels, arch.decoder_channels, 3), true, rng);
  fuse2_ = nn::ConvBnAct(conv_opts(arch.decoder_channels, arch.decoder_channels, 3), true, rng);
  classifier_ = nn::Conv2d(conv_opts(arch.decoder_channels, ArchConfig::kClasses, 1, 1, 1, true), rng);
}

Var MajorDecoder::forward_plain(const FeaturePyramid& pyr, int out_h, int out_w, bool train) const {
  const int h4 = pyr.f4.value().h(), w4 = pyr.f4.value().w();
  std::vector<Var> parts;
  for (const auto& b : branches_) parts.push_back(b.forward(pyr.f4, train));
  Var pooled = ops::relu(pool_conv_.forward(ops::global_avg_pool(pyr.f4)));
  parts.push_back(ops::resize_bilinear(pooled, h4, w4));
  Var context = project_.forward(ops::concat_channels(parts), train);

  const int h1 = pyr.f1.value().h(), w1 = pyr.f1.value().w();
  Var low = low_level_.forward(pyr.f1, train);
  Var fused = ops::concat_channels({ops::resize_bilinear(context, h1, w1), low});
  fused = fuse2_.forward(fuse1_.forward(fused, train), train);
  return ops::resize_bilinear(classifier_.forward(fused), out_h, out_w);
}

Var MajorDecoder::forward(const FeaturePyramid& pyr, const Var& cam, bool train) const {
  const Tensor& c = cam.value();
  if (c.rank() != 4 || c.c() != 1) throw ShapeError("major decoder: CAM must be (N,1,H,W), got " + shape_str(c.shape()));
  // f1 sits at stride 4, so the input size is pinned to within 3 pixels.
  const Tensor& f1 = pyr.f1.value();
  auto fits = [](int in, int low) { return in > 4 * (low - 1) && in <= 4 * low; };
  if (!fits(c.h(), f1.h()) || !fits(c.w(), f1.w())) {
    throw ShapeError("major decoder: CAM " + shape_str(c.shape()) + " does not match the input of pyramid level f1 " +
                     shape_str(f1.shape()));
  }
  return apply_cam_attention(forward_plain(pyr, c.h(), c.w(), train), cam);
}

Var apply_cam_attention(const Var& plain_logits, const Var& cam) {
  const Tensor& p = plain_logits.value();
  const Tensor& c = cam.value();
  if (c.rank() != 4 || c.c() != 1 || c.n() != p.n() || c.h() != p.h() || c.w() != p.w()) {
    throw ShapeError("CAM " + shape_str(c.shape()) + " is not spatially aligned with logits " + shape_str(p.shape()));
  }
  return ops::mul_channel_broadcast(plain_logits, ops::add_scalar(ops::sigmoid(cam), 1.0));
}

void MajorDecoder::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (std::size_t i = 0; i < branches_.size(); ++i) branches_[i].enumerate(prefix + "aspp" + std::to_string(i) + ".", out);
  pool_conv_.enumerate(prefix + "aspp_pool.", out);
  project_.enumerate(prefix + "project.", out);
  low_level_.enumerate(prefix + "low_level.", out);
  fuse1_.enumerate(prefix + "fuse1.", out);
  fuse2_.enumerate(prefix + "fuse2.", out);
  classifier_.enumerate(prefix + "classifier.", out);
}

AuxDecoder::AuxDecoder(const ArchConfig& arch, Rng& rng)
    : hidden_(conv_opts(arch.stage_channels[3], arch.aux_channels, 3), true, rng),
      classifier_(conv_opts(arch.aux_channels, ArchConfig::kClasses, 1, 1, 1, true), rng) {}

Var AuxDecoder::forward(const FeaturePyramid& pyr, int out_h, int out_w, bool train) const {
  return ops::resize_bilinear(classifier_.forward(hidden_.forward(pyr.f4, train)), out_h, out_w);
}

void AuxDecoder::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  hidden_.enumerate(prefix + "hidden.", out);
  classifier_.enumerate(prefix + "classifier.", out);
}

CamExtractor::CamExtractor(const ArchConfig& arch, Rng& rng)
    : encoder_(arch, rng), classifier_(conv_opts(arch.stage_channels[3], ArchConfig::kClasses, 1, 1, 1, true), rng) {}

CamOutput CamExtractor::forward(const Var& images, bool train) const {
  FeaturePyramid pyr = encoder_.forward(images, train);
  CamOutput out;
  out.logits = classifier_.forward(ops::global_avg_pool(pyr.f4));
  out.probs = ops::softmax_channels(out.logits);
  {
    ad::NoGradGuard no_grad;
    Tensor response = classifier_.forward(ad::detach(pyr.f4)).value();
    out.cam_low = response.slice_channels(1, 1);
    out.cam = kernels::resize_bilinear(out.cam_low, images.value().h(), images.value().w());
  }
  return out;
}

Tensor CamExtractor::cam(const Tensor& images) const {
  ad::NoGradGuard no_grad;
  return forward(ad::constant(images), false).cam;
}

void CamExtractor::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  encoder_.enumerate(prefix + "encoder.", out);
  classifier_.enumerate(prefix + "classifier.", out);
}

DiscriminatorStack::DiscriminatorStack(int in_channels, const std::array<int, 4>& channels, Rng& rng)
    : in_channels_(in_channels) {
  int in = in_channels;
  for (int i = 0; i < 5; ++i) {
    nn::Conv2dOptions o;
    o.in_channels = in;
    o.out_channels = i < 4 ? channels[i] : 1;
    o.kernel = 4;
    o.stride = 2;
    o.same_padding = true;
    o.bias = true;
    convs_.emplace_back(o, rng);
    in = o.out_channels;
  }
}

Var DiscriminatorStack::forward(const Var& x) const {
  if (x.value().rank() != 4 || x.value().c() != in_channels_) {
    throw ShapeError("discriminator expects " + std::to_string(in_channels_) + " input channels, got " +
                     shape_str(x.shape()));
  }
  Var h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (i + 1 < convs_.size()) h = ops::leaky_relu(h, 0.2);
  }
  return h;
}

void DiscriminatorStack::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].enumerate(prefix + "conv" + std::to_string(i) + ".", out);
}

MaskDiscriminator::MaskDiscriminator(const ArchConfig& arch, Rng& rng)
    : stack_(ArchConfig::kClasses, arch.mask_disc_channels, rng) {}

Var MaskDiscriminator::forward(const Var& prob_sum) const {
  const Tensor& x = prob_sum.value();
  return ops::resize_bilinear(stack_.forward(prob_sum), x.h(), x.w());
}

void MaskDiscriminator::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  stack_.enumerate(prefix, out);
}

FeatureDiscriminator::FeatureDiscriminator(const ArchConfig& arch, Rng& rng)
    : stack_(arch.stage_channels[0] + arch.stage_channels[1] + arch.stage_channels[2], arch.feature_disc_channels,
             rng) {}

FeatureDiscriminator::FeatureDiscriminator(int in_channels, const std::array<int, 4>& channels, Rng& rng)
    : stack_(in_channels, channels, rng) {}

Var FeatureDiscriminator::forward(const Var& f1, const Var& f2, const Var& f3) const {
  const Tensor& a = f1.value();
  if (f2.value().n() != a.n() || f3.value().n() != a.n()) {
    throw ShapeError("feature discriminator: pyramid levels come from different batches");
  }
  const int concat = a.c() + f2.value().c() + f3.value().c();
  if (concat != stack_.in_channels()) {
    throw ShapeError("feature discriminator: concatenated channels " + std::to_string(concat) + " != configured " +
                     std::to_string(stack_.in_channels()));
  }
  Var x = ops::concat_channels({f1, ops::resize_bilinear(f2, a.h(), a.w()), ops::resize_bilinear(f3, a.h(), a.w())});
  return stack_.forward(x);
}

void FeatureDiscriminator::enumerate(const std::string& prefix, std::vector<nn::NamedTensor>& out) const {
  stack_.enumerate(prefix, out);
}

namespace {
Encoder make_encoder(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng = role_rng(seed, Role::kEncoder);
  return Encoder(arch, rng);
}
template <typename T>
T make_module(const ArchConfig& arch, std::uint64_t seed, Role role) {
  Rng rng = role_rng(seed, role);
  return T(arch, rng);
}
}  // namespace

SegmentationNet::SegmentationNet(const ArchConfig& arch, std::uint64_t seed)
    : arch_(arch),
      encoder_(make_encoder(arch, seed)),
      major_(make_module<MajorDecoder>(arch, seed, Role::kMajorDecoder)),
      aux1_(make_module<AuxDecoder>(arch, seed, Role::kAux1)),
      aux2_(make_module<AuxDecoder>(arch, seed, Role::kAux2)) {}

SegmentationOutput SegmentationNet::forward(const Var& images, const Tensor* cam, bool train) const {
  SegmentationOutput out;
  out.pyramid = encoder_.forward(images, train);
  const int h = images.value().h(), w = images.value().w();
  out.p0 = cam ? major_.forward(out.pyramid, ad::constant(*cam), train)
               : major_.forward_plain(out.pyramid, h, w, train);
  out.p1 = aux1_.forward(out.pyramid, h, w, train);
  out.p2 = aux2_.forward(out.pyramid, h, w, train);
  return out;
}

ModuleGroup SegmentationNet::group() const {
  return {{Role::kEncoder, &encoder_}, {Role::kMajorDecoder, &major_}, {Role::kAux1, &aux1_}, {Role::kAux2, &aux2_}};
}

std::vector<Var> SegmentationNet::parameters() const {
  std::vector<Var> out;
  for (const auto& [role, m] : group()) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

DascModel::DascModel(const ArchConfig& arch, std::uint64_t seed)
    : net(arch, seed), cam(make_module<CamExtractor>(arch, seed, Role::kCamExtractor)) {}

ModuleGroup DascModel::group() const {
  ModuleGroup g = net.group();
  g.emplace_back(Role::kCamExtractor, &cam);
  return g;
}

Tensor DascModel::predict_foreground(const Tensor& images, bool cam_attention) const {
  ad::NoGradGuard no_grad;
  Tensor cam_map;
  if (cam_attention) cam_map = cam.cam(images);
  SegmentationOutput out = net.forward(ad::constant(images), cam_attention ? &cam_map : nullptr, false);
  return ops::softmax_channels(out.p0).value().slice_channels(1, 1);
}

Discriminators::Discriminators(const ArchConfig& arch, std::uint64_t seed)
    : mask(make_module<MaskDiscriminator>(arch, seed, Role::kMaskDiscriminator)),
      feature(make_module<FeatureDiscriminator>(arch, seed, Role::kFeatureDiscriminator)) {}

ModuleGroup Discriminators::group() const {
  return {{Role::kMaskDiscriminator, &mask}, {Role::kFeatureDiscriminator, &feature}};
}

std::vector<Var> conv_weights(const nn::Module& module) {
  std::vector<Var> out;
  for (auto& t : module.named_tensors())
    if (t.kind == nn::TensorKind::kConvWeight) out.push_back(t.var);
  return out;
}

}  // namespace dasc
