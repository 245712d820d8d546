#include "dasc/adaptation.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dasc/checkpoint.hpp"
#include "dasc/error.hpp"
#include "dasc/ops.hpp"

namespace dasc {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSourceStream = 1;
constexpr std::uint64_t kTargetStream = 2;
constexpr std::uint64_t kCamStream = 3;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

bool finite(double v) { return std::isfinite(v); }

double value_or_zero(const Var& v) { return v.defined() ? v.item() : 0.0; }

std::vector<TrainSample> fit_resolution(std::vector<TrainSample> pool, int h, int w) {
  for (auto& s : pool) {
    if (s.image.height == h && s.image.width == w) continue;
    s.image = resize(s.image, h, w);
    if (s.hard) s.hard = resize(*s.hard, h, w);
    if (s.soft) s.soft = resize(*s.soft, h, w);
  }
  return pool;
}

}  // namespace

void TrainingConfig::validate() const {
  loss.validate();
  if (!(lr_generator > 0) || !(lr_discriminators > 0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs_da < 0 || epochs_cam < 0) throw ConfigError("epoch counts must be non-negative");
  if (!(lr_power > 0)) throw ConfigError("lr_power must be positive");
  arch().validate();
}

ArchConfig TrainingConfig::arch() const { return ArchConfig::for_preset(arch_preset, height, width); }

bool TrainingConfig::needs_target() const {
  return loss.adv_seg > 0.0 || (uses_feature_alignment() && loss.adv_fea > 0.0);
}

std::string head_name(PredictionHead h) { return h == PredictionHead::kMajor ? "major" : "aux_mean"; }

PredictionHead head_from_name(const std::string& s) {
  if (s == "major") return PredictionHead::kMajor;
  if (s == "aux_mean") return PredictionHead::kAuxMean;
  throw ConfigError("unknown prediction head '" + s + "'");
}

Predictor make_predictor(const DascModel& model, PredictionHead head, bool cam_attention) {
  if (head == PredictionHead::kMajor) {
    return [&model, cam_attention](const Tensor& images) { return model.predict_foreground(images, cam_attention); };
  }
  return [&model](const Tensor& images) {
    ad::NoGradGuard no_grad;
    SegmentationOutput out = model.net.forward(ad::constant(images), nullptr, false);
    Tensor a = ops::softmax_channels(out.p1).value().slice_channels(1, 1);
    const Tensor b = ops::softmax_channels(out.p2).value().slice_channels(1, 1);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 * (a[i] + b[i]);
    return a;
  };
}

std::string loss_csv_header() { return "step,lr,L_seg,L_weight,L_adv_seg,L_adv_fea,L_da,D_mask,D_feature\n"; }

std::string loss_csv_row(const LossRecord& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.step << ',' << r.lr << ',' << r.seg << ',' << r.weight << ',' << r.adv_seg << ',' << r.adv_fea << ','
     << r.da << ',' << r.d_mask << ',' << r.d_feature << '\n';
  return os.str();
}

std::vector<TrainSample> to_train_samples(const Dataset& ds) {
  std::vector<TrainSample> out;
  out.reserve(ds.size());
  for (const auto& s : ds) out.push_back({s.image, s.label, std::nullopt, s.sample_id});
  return out;
}

std::vector<TrainSample> to_train_samples(const UnlabeledDataset& ds) {
  std::vector<TrainSample> out;
  out.reserve(ds.size());
  for (const auto& s : ds) out.push_back({s.image, std::nullopt, std::nullopt, s.sample_id});
  return out;
}

Batch load_batch(const std::vector<TrainSample>& pool, const std::vector<std::size_t>& indices, bool augment,
                 std::uint64_t seed, std::uint64_t stream_tag, std::uint64_t epoch) {
  if (indices.empty()) throw DataError("load_batch: empty batch");
  const bool labeled = pool[indices[0]].hard || pool[indices[0]].soft;
  std::vector<Slice> images, targets;
  for (std::size_t i : indices) {
    const TrainSample& s = pool.at(i);
    Slice img = s.image;
    std::optional<Slice> tgt;
    if (s.soft) {
      tgt = *s.soft;
    } else if (s.hard) {
      Slice t = Slice::zeros(s.hard->height, s.hard->width);
      for (std::size_t k = 0; k < t.pixels.size(); ++k) t.pixels[k] = s.hard->pixels[k];
      tgt = std::move(t);
    }
    if (labeled != tgt.has_value()) throw DataError("load_batch: mixed labeled and unlabeled samples");
    if (augment) {
      Rng rng = make_rng(seed, {tag(Stream::kAugment), stream_tag, epoch, static_cast<std::uint64_t>(i)});
      const AugmentParams p = AugmentParams::draw(rng);
      img = warp(img, p);
      if (s.soft) {
        tgt = warp(*tgt, p);
      } else if (s.hard) {
        const BinaryMask m = warp(*s.hard, p);
        for (std::size_t k = 0; k < m.pixels.size(); ++k) tgt->pixels[k] = m.pixels[k];
      }
    }
    images.push_back(std::move(img));
    if (tgt) targets.push_back(std::move(*tgt));
  }
  Batch b;
  b.images = to_tensor(images);
  if (labeled) b.targets = to_tensor(targets);
  return b;
}

std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::int64_t iters, std::uint64_t seed,
                                       std::uint64_t stream_tag, int epoch, std::int64_t j) {
  (void)iters;
  const std::int64_t per_pass = ceil_div(static_cast<std::int64_t>(n), batch_size);
  const std::int64_t pass = j / per_pass;
  // A smaller domain is cycled within the epoch, reshuffled on every pass.
  const std::uint64_t order_seed = derive_seed(seed, {stream_tag, static_cast<std::uint64_t>(epoch)});
  const auto batches = make_batches(n, batch_size, order_seed, static_cast<std::uint64_t>(pass));
  return batches[static_cast<std::size_t>(j % per_pass)];
}

ParameterVector train_cam_extractor(const Dataset& source, const TrainingConfig& cfg) {
  cfg.validate();
  std::vector<TrainSample> pool;
  std::vector<int> tags;
  bool pos = false, neg = false;
  for (const auto& s : source) {
    if (!s.class_tag) throw DataError("CAM extractor: sample " + s.sample_id + " has no class tag");
    pool.push_back({s.image, std::nullopt, std::nullopt, s.sample_id});
    tags.push_back(*s.class_tag == ClassTag::kPositive ? 1 : 0);
    (*s.class_tag == ClassTag::kPositive ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("CAM extractor needs both positive and negative samples");
  pool = fit_resolution(std::move(pool), cfg.height, cfg.width);

  DascModel model(cfg.arch(), cfg.seed);
  const ModuleGroup group{{Role::kCamExtractor, &model.cam}};
  Adam opt(model.cam.parameters(), cfg.lr_generator, cfg.beta1, cfg.beta2);
  const std::int64_t ipe = ceil_div(static_cast<std::int64_t>(pool.size()), cfg.batch_size);
  const std::int64_t total = ipe * cfg.epochs_cam;
  for (std::int64_t it = 0; it < total; ++it) {
    const int epoch = static_cast<int>(it / ipe);
    const auto idx = batch_indices(pool.size(), cfg.batch_size, ipe, cfg.seed, kCamStream, epoch, it % ipe);
    const Batch b = load_batch(pool, idx, cfg.augment, cfg.seed, kCamStream, epoch);
    std::vector<int> batch_tags;
    for (std::size_t i : idx) batch_tags.push_back(tags[i]);
    opt.zero_grad();
    const CamOutput out = model.cam.forward(ad::constant(b.images), true);
    const Var loss = cam_ce_loss(out.probs, batch_tags);
    if (!finite(loss.item())) throw NumericalError("CAM extractor loss is not finite at iteration " + std::to_string(it));
    ad::backward(loss);
    opt.set_lr(poly_lr(cfg.lr_generator, it, total, cfg.lr_power));
    opt.step();
  }
  return get_params(group);
}

double cam_accuracy(const ParameterVector& cam_params, const Dataset& ds, const TrainingConfig& cfg) {
  DascModel model(cfg.arch(), cfg.seed);
  set_params({{Role::kCamExtractor, &model.cam}}, cam_params);
  ad::NoGradGuard no_grad;
  int correct = 0, total = 0;
  for (std::size_t b = 0; b < ds.size(); b += 16) {
    std::vector<Slice> imgs;
    std::vector<int> tags;
    for (std::size_t i = b; i < std::min(ds.size(), b + 16); ++i) {
      if (!ds[i].class_tag) continue;
      imgs.push_back(resize(ds[i].image, cfg.height, cfg.width));
      tags.push_back(*ds[i].class_tag == ClassTag::kPositive ? 1 : 0);
    }
    if (imgs.empty()) continue;
    const Tensor probs = model.cam.forward(ad::constant(to_tensor(imgs)), false).probs.value();
    for (std::size_t k = 0; k < tags.size(); ++k) {
      const int pred = probs[2 * k + 1] > probs[2 * k] ? 1 : 0;
      correct += pred == tags[k];
      ++total;
    }
  }
  if (total == 0) throw DataError("cam_accuracy: no tagged samples");
  return static_cast<double>(correct) / total;
}

AfdDaTrainer::AfdDaTrainer(const Dataset& source, const UnlabeledDataset& target, const ParameterVector& cam_params,
                           const TrainingConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  const Dataset seg_source = cfg_.positive_source_only ? positive_only(source) : source;
  for (const auto& s : seg_source) {
    if (!s.label) throw DataError("source sample " + s.sample_id + " has no label");
  }
  if (seg_source.empty()) throw DataError("no labeled source samples for segmentation training");
  source_ = fit_resolution(to_train_samples(seg_source), cfg_.height, cfg_.width);
  target_ = fit_resolution(to_train_samples(target), cfg_.height, cfg_.width);
  if (cfg_.needs_target() && target_.empty()) throw DataError("adversarial training needs target samples");

  const ArchConfig arch = cfg_.arch();
  model_ = std::make_unique<DascModel>(arch, cfg_.seed);
  discs_ = std::make_unique<Discriminators>(arch, cfg_.seed);
  set_params({{Role::kCamExtractor, &model_->cam}}, cam_params);
  model_->cam.set_requires_grad(false);

  opt_g_ = std::make_unique<Adam>(model_->net.parameters(), cfg_.lr_generator, cfg_.beta1, cfg_.beta2);
  opt_dm_ = std::make_unique<Adam>(discs_->mask.parameters(), cfg_.lr_discriminators, cfg_.beta1, cfg_.beta2);
  opt_df_ = std::make_unique<Adam>(discs_->feature.parameters(), cfg_.lr_discriminators, cfg_.beta1, cfg_.beta2);

  const auto longest = static_cast<std::int64_t>(std::max(source_.size(), target_.size()));
  iters_per_epoch_ = ceil_div(longest, cfg_.batch_size);
  total_iterations_ = iters_per_epoch_ * cfg_.epochs_da;
}

LossRecord AfdDaTrainer::step() {
  if (done()) throw ConfigError("AFD-DA training already finished");
  const std::int64_t it = state_.iteration;
  const int epoch = static_cast<int>(it / iters_per_epoch_);
  const std::int64_t j = it % iters_per_epoch_;
  const double lr_g = poly_lr(cfg_.lr_generator, it, total_iterations_, cfg_.lr_power);
  const double lr_d = poly_lr(cfg_.lr_discriminators, it, total_iterations_, cfg_.lr_power);
  const bool major = cfg_.uses_major_branch();
  const bool use_mask_adv = cfg_.loss.adv_seg > 0.0;
  const bool use_fea_adv = cfg_.uses_feature_alignment() && cfg_.loss.adv_fea > 0.0;
  const LossWeights& lw = cfg_.loss;

  const Batch src = load_batch(source_, batch_indices(source_.size(), cfg_.batch_size, iters_per_epoch_, cfg_.seed,
                                                      kSourceStream, epoch, j),
                               cfg_.augment, cfg_.seed, kSourceStream, epoch);

  // Generator step, discriminators frozen.
  discs_->mask.set_requires_grad(false);
  discs_->feature.set_requires_grad(false);
  opt_g_->zero_grad();
  Tensor cam_s;
  if (major) cam_s = model_->cam.cam(src.images);
  const SegmentationOutput out_s = model_->net.forward(ad::constant(src.images), major ? &cam_s : nullptr, true);

  DaLossParts parts;
  parts.seg = seg_loss(major ? out_s.p0 : Var(), out_s.p1, out_s.p2, src.targets, lw.seg);
  parts.weight = weight_discrepancy(conv_weights(model_->net.aux1()), conv_weights(model_->net.aux2()));

  Tensor src_sum, tgt_sum, dis;
  FeaturePyramid pyr_t;
  if (use_mask_adv || use_fea_adv) {
    const Batch tgt = load_batch(target_, batch_indices(target_.size(), cfg_.batch_size, iters_per_epoch_, cfg_.seed,
                                                        kTargetStream, epoch, j),
                                 cfg_.augment, cfg_.seed, kTargetStream, epoch);
    const bool att_t = major && cfg_.cam_attention_on_target;
    Tensor cam_t;
    if (att_t) cam_t = model_->cam.cam(tgt.images);
    const SegmentationOutput out_t = model_->net.forward(ad::constant(tgt.images), att_t ? &cam_t : nullptr, true);
    pyr_t = out_t.pyramid;
    if (use_mask_adv) {
      const Var q1 = ops::softmax_channels(out_t.p1), q2 = ops::softmax_channels(out_t.p2);
      dis = cosine_discrepancy(ad::detach(q1), ad::detach(q2)).value();
      const Var sum_t = ops::add(q1, q2);
      tgt_sum = sum_t.value();
      {
        ad::NoGradGuard no_grad;
        src_sum = ops::add(ops::softmax_channels(out_s.p1), ops::softmax_channels(out_s.p2)).value();
      }
      parts.adv_seg = adv_seg_loss(Var(), discs_->mask.forward(sum_t), dis, lw.dis, Side::kGenerator,
                                   lw.max_pixel_weight);
    }
    if (use_fea_adv) {
      parts.adv_fea = adv_fea_loss(Var(), discs_->feature.forward(pyr_t.f1, pyr_t.f2, pyr_t.f3), Side::kGenerator);
    }
  }
  const Var total = total_da_loss(parts, lw, cfg_.base_da_mode);

  LossRecord rec;
  rec.step = it;
  rec.lr = lr_g;
  rec.seg = parts.seg.item();
  rec.weight = parts.weight.item();
  rec.adv_seg = value_or_zero(parts.adv_seg);
  rec.adv_fea = value_or_zero(parts.adv_fea);
  rec.da = total.item();
  if (!finite(rec.da) || !finite(rec.seg) || !finite(rec.weight) || !finite(rec.adv_seg) || !finite(rec.adv_fea)) {
    std::ostringstream os;
    os << "non-finite generator loss at iteration " << it << " (seg=" << rec.seg << " weight=" << rec.weight
       << " adv_seg=" << rec.adv_seg << " adv_fea=" << rec.adv_fea << ")";
    throw NumericalError(os.str());
  }
  ad::backward(total);
  opt_g_->set_lr(lr_g);
  opt_g_->step();
  if (phase_hook_) phase_hook_(Phase::kGeneratorUpdated);

  // Discriminator step on detached generator outputs.
  if (use_mask_adv) {
    discs_->mask.set_requires_grad(true);
    opt_dm_->zero_grad();
    const Var d_loss = adv_seg_loss(discs_->mask.forward(ad::constant(src_sum)),
                                    discs_->mask.forward(ad::constant(tgt_sum)), dis, lw.dis, Side::kDiscriminator,
                                    lw.max_pixel_weight);
    rec.d_mask = d_loss.item();
    if (!finite(rec.d_mask)) throw NumericalError("non-finite mask discriminator loss at iteration " + std::to_string(it));
    ad::backward(d_loss);
    opt_dm_->set_lr(lr_d);
    opt_dm_->step();
  }
  if (use_fea_adv) {
    discs_->feature.set_requires_grad(true);
    opt_df_->zero_grad();
    const auto& ps = out_s.pyramid;
    const Var d_loss = adv_fea_loss(
        discs_->feature.forward(ad::detach(ps.f1), ad::detach(ps.f2), ad::detach(ps.f3)),
        discs_->feature.forward(ad::detach(pyr_t.f1), ad::detach(pyr_t.f2), ad::detach(pyr_t.f3)),
        Side::kDiscriminator);
    rec.d_feature = d_loss.item();
    if (!finite(rec.d_feature)) {
      throw NumericalError("non-finite feature discriminator loss at iteration " + std::to_string(it));
    }
    ad::backward(d_loss);
    opt_df_->set_lr(lr_d);
    opt_df_->step();
  }
  if (phase_hook_) phase_hook_(Phase::kDiscriminatorsUpdated);

  state_.iteration = it + 1;
  state_.epoch = static_cast<int>(state_.iteration / iters_per_epoch_);
  state_.lr_generator = lr_g;
  state_.lr_discriminators = lr_d;
  state_.last = rec;
  history_.push_back(rec);
  return rec;
}

namespace {

void append_optimizer(std::vector<NamedArray>& out, const std::string& prefix, const Adam& opt) {
  const AdamState& st = opt.state();
  out.push_back({prefix + ".step", Tensor({1}, static_cast<double>(st.step)), false});
  for (std::size_t k = 0; k < st.m.size(); ++k) {
    out.push_back({prefix + ".m." + std::to_string(k), st.m[k], false});
    out.push_back({prefix + ".v." + std::to_string(k), st.v[k], false});
  }
}

void restore_optimizer(const std::vector<NamedArray>& arrays, const std::string& prefix, Adam& opt) {
  AdamState st;
  std::size_t k = 0;
  for (const auto& a : arrays) {
    if (a.name == prefix + ".step") st.step = static_cast<std::int64_t>(a.value[0]);
  }
  for (;; ++k) {
    const std::string mn = prefix + ".m." + std::to_string(k), vn = prefix + ".v." + std::to_string(k);
    const NamedArray* m = nullptr;
    const NamedArray* v = nullptr;
    for (const auto& a : arrays) {
      if (a.name == mn) m = &a;
      if (a.name == vn) v = &a;
    }
    if (!m || !v) break;
    st.m.push_back(m->value);
    st.v.push_back(v->value);
  }
  opt.load_state(std::move(st));
}

Tensor history_tensor(const std::vector<LossRecord>& h) {
  Tensor t({static_cast<int>(h.size()), 9});
  for (std::size_t i = 0; i < h.size(); ++i) {
    const LossRecord& r = h[i];
    const double row[9] = {static_cast<double>(r.step), r.lr, r.seg, r.weight, r.adv_seg, r.adv_fea, r.da, r.d_mask,
                           r.d_feature};
    std::copy(row, row + 9, t.data() + i * 9);
  }
  return t;
}

std::vector<LossRecord> history_from(const Tensor& t) {
  std::vector<LossRecord> h;
  if (t.empty()) return h;
  for (int i = 0; i < t.dim(0); ++i) {
    const double* r = t.data() + static_cast<std::size_t>(i) * 9;
    h.push_back({static_cast<std::int64_t>(r[0]), r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]});
  }
  return h;
}

}  // namespace

void AfdDaTrainer::save(const fs::path& dir) const {
  fs::create_directories(dir);
  CheckpointManifest m;
  m.stage = "afd-da";
  m.preset = cfg_.arch_preset;
  m.height = cfg_.height;
  m.width = cfg_.width;
  m.seed = cfg_.seed;
  m.head = head_name(cfg_.uses_major_branch() ? PredictionHead::kMajor : PredictionHead::kAuxMean);
  save_checkpoint(dir / "generator", model_->params(), m);
  m.stage = "afd-da-discriminators";
  save_checkpoint(dir / "discriminators", get_params(discs_->group()), m);
  std::vector<NamedArray> extra;
  append_optimizer(extra, "opt_g", *opt_g_);
  append_optimizer(extra, "opt_dm", *opt_dm_);
  append_optimizer(extra, "opt_df", *opt_df_);
  extra.push_back({"history", history_tensor(history_), false});
  extra.push_back({"iteration", Tensor({1}, static_cast<double>(state_.iteration)), false});
  write_named_arrays(dir / "train_state.h5", extra);
}

void AfdDaTrainer::resume(const fs::path& dir) {
  model_->load(load_checkpoint(dir / "generator"));
  set_params(discs_->group(), load_checkpoint(dir / "discriminators"));
  const auto extra = read_named_arrays(dir / "train_state.h5");
  restore_optimizer(extra, "opt_g", *opt_g_);
  restore_optimizer(extra, "opt_dm", *opt_dm_);
  restore_optimizer(extra, "opt_df", *opt_df_);
  for (const auto& a : extra) {
    if (a.name == "history") history_ = history_from(a.value);
    if (a.name == "iteration") state_.iteration = static_cast<std::int64_t>(a.value[0]);
  }
  state_.epoch = static_cast<int>(state_.iteration / std::max<std::int64_t>(1, iters_per_epoch_));
  if (!history_.empty()) state_.last = history_.back();
}

DaResult AfdDaTrainer::run(const DaRunOptions& opts) {
  std::ofstream csv;
  if (!opts.loss_csv.empty()) {
    if (opts.loss_csv.has_parent_path()) fs::create_directories(opts.loss_csv.parent_path());
    csv.open(opts.loss_csv);
    csv << loss_csv_header();
    for (const auto& r : history_) csv << loss_csv_row(r);
  }
  while (!done() && (opts.stop_at < 0 || state_.iteration < opts.stop_at)) {
    LossRecord rec;
    try {
      rec = step();
    } catch (const NumericalError&) {
      if (!opts.checkpoint_dir.empty()) save(opts.checkpoint_dir / "nan_snapshot");
      throw;
    }
    if (csv.is_open()) csv << loss_csv_row(rec);
    if (opts.on_step) opts.on_step(rec);
    if (rec.step % std::max<std::int64_t>(1, iters_per_epoch_) == 0) {
      spdlog::debug("afd-da it {} / {}  L_da {:.4f}  L_seg {:.4f}", rec.step, total_iterations_, rec.da, rec.seg);
    }
    if (!opts.checkpoint_dir.empty() && opts.checkpoint_every > 0 && state_.iteration % opts.checkpoint_every == 0) {
      save(opts.checkpoint_dir / "latest");
    }
  }
  if (!opts.checkpoint_dir.empty()) save(opts.checkpoint_dir / "latest");
  return {model_->params(), history_, state_};
}

DaResult train_afd_da(const Dataset& source, const UnlabeledDataset& target, const ParameterVector& cam_params,
                      const TrainingConfig& cfg, const DaRunOptions& opts) {
  AfdDaTrainer trainer(source, target, cam_params, cfg);
  return trainer.run(opts);
}

std::vector<LossRecord> train_segmentation(const DascModel& model, const std::vector<TrainSample>& samples, int epochs,
                                           const TrainingConfig& cfg, std::uint64_t run_tag) {
  if (epochs < 0) throw ConfigError("train_segmentation: epochs must be non-negative");
  std::vector<LossRecord> hist;
  if (epochs == 0 || samples.empty()) return hist;
  const auto pool = fit_resolution(samples, cfg.height, cfg.width);
  model.cam.set_requires_grad(false);
  Adam opt(model.net.parameters(), cfg.lr_generator, cfg.beta1, cfg.beta2);
  const std::int64_t ipe = ceil_div(static_cast<std::int64_t>(pool.size()), cfg.batch_size);
  const std::int64_t total = ipe * epochs;
  const std::uint64_t stream = 100 + run_tag;
  for (std::int64_t it = 0; it < total; ++it) {
    const int epoch = static_cast<int>(it / ipe);
    const Batch b = load_batch(pool, batch_indices(pool.size(), cfg.batch_size, ipe, cfg.seed, stream, epoch, it % ipe),
                               cfg.augment, cfg.seed, stream, epoch);
    opt.zero_grad();
    const Tensor cam = model.cam.cam(b.images);
    const SegmentationOutput out = model.net.forward(ad::constant(b.images), &cam, true);
    const Var loss = seg_loss(out.p0, out.p1, out.p2, b.targets, cfg.loss.seg);
    LossRecord rec;
    rec.step = it;
    rec.lr = poly_lr(cfg.lr_generator, it, total, cfg.lr_power);
    rec.seg = rec.da = loss.item();
    if (!finite(rec.seg)) throw NumericalError("non-finite segmentation loss at iteration " + std::to_string(it));
    ad::backward(loss);
    opt.set_lr(rec.lr);
    opt.step();
    hist.push_back(rec);
  }
  return hist;
}

}  // namespace dasc
