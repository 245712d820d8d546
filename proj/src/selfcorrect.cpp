#include "dasc/selfcorrect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include <spdlog/spdlog.h>

#include "dasc/checkpoint.hpp"
#include "dasc/error.hpp"

namespace dasc {
namespace fs = std::filesystem;

void SelfCorrectionConfig::validate() const {
  if (cycles < 1) throw ConfigError("self-correction: cycles must be >= 1");
  if (epochs_per_cycle < 0) throw ConfigError("self-correction: epochs per cycle must be >= 0");
  if (!(pseudo_threshold >= 0.0 && pseudo_threshold <= 1.0)) throw ConfigError("pseudo threshold outside [0,1]");
}

void PseudoLabelSet::validate() const {
  if (sample_ids.size() != maps.size()) throw DataError("pseudo labels: id/map count mismatch");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].size() != std::size_t(height) * width) throw DataError("pseudo label " + sample_ids[i] + ": bad size");
    for (double v : maps[i]) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("pseudo label " + sample_ids[i] + ": value outside [0,1]");
    }
  }
}

PseudoLabelSet generate_pseudo_labels(const Predictor& predictor, const UnlabeledDataset& target, bool flip_h,
                                      bool flip_v, int batch_size) {
  if (batch_size < 1) throw ConfigError("pseudo labels: batch size must be >= 1");
  PseudoLabelSet out;
  if (target.empty()) return out;
  out.height = target[0].image.height;
  out.width = target[0].image.width;
  out.provenance = std::string("tta:identity") + (flip_h ? "+flip_h" : "") + (flip_v ? "+flip_v" : "");
  struct View {
    bool h, v;
  };
  std::vector<View> views{{false, false}};
  if (flip_h) views.push_back({true, false});
  if (flip_v) views.push_back({false, true});
  const int H = out.height, W = out.width;
  for (std::size_t b = 0; b < target.size(); b += batch_size) {
    const std::size_t e = std::min(target.size(), b + batch_size);
    std::vector<std::vector<double>> acc(e - b, std::vector<double>(std::size_t(H) * W, 0.0));
    for (const View& view : views) {
      std::vector<Slice> imgs;
      for (std::size_t i = b; i < e; ++i) {
        const Slice& s = target[i].image;
        if (s.height != H || s.width != W) throw ShapeError("pseudo labels: target slices differ in shape");
        imgs.push_back({H, W, flip_plane(s.pixels, H, W, view.h, view.v)});
      }
      const Tensor prob = predictor(to_tensor(imgs));
      for (std::size_t i = b; i < e; ++i) {
        const auto back = flip_plane(plane_of(prob, static_cast<int>(i - b)), H, W, view.h, view.v);
        auto& a = acc[i - b];
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += back[k];
      }
    }
    for (std::size_t i = b; i < e; ++i) {
      auto& a = acc[i - b];
      if (views.size() > 1) {
        for (auto& v : a) v = std::clamp(v / static_cast<double>(views.size()), 0.0, 1.0);
      }
      out.sample_ids.push_back(target[i].sample_id);
      out.maps.push_back(std::move(a));
    }
  }
  return out;
}

double convex_update(double prev, double init, int c) {
  if (c < 1) throw ConfigError("aggregation cycle index must be >= 1");
  const double v = prev + (init - prev) / static_cast<double>(c + 1);
  return std::clamp(v, std::min(prev, init), std::max(prev, init));
}

ParameterVector aggregate_weights(const ParameterVector& w_prev, const ParameterVector& w0, int c) {
  if (c < 1) throw ConfigError("aggregate_weights: cycle index must be >= 1");
  w_prev.require_compatible(w0);
  ParameterVector out = w_prev;
  for (std::size_t k = 0; k < out.size(); ++k) {
    Tensor& t = out.entries()[k].value;
    const Tensor& init = w0.entries()[k].value;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = convex_update(t[i], init[i], c);
  }
  return out;
}

PseudoLabelSet aggregate_labels(const PseudoLabelSet& y_prev, const PseudoLabelSet& y0, int c) {
  if (c < 1) throw ConfigError("aggregate_labels: cycle index must be >= 1");
  if (y_prev.sample_ids != y0.sample_ids || y_prev.height != y0.height || y_prev.width != y0.width) {
    throw DataError("aggregate_labels: pseudo-label sets cover different samples");
  }
  PseudoLabelSet out = y_prev;
  out.cycle = c;
  for (std::size_t s = 0; s < out.maps.size(); ++s) {
    if (out.maps[s].size() != y0.maps[s].size()) throw DataError("aggregate_labels: map size mismatch");
    for (std::size_t i = 0; i < out.maps[s].size(); ++i) out.maps[s][i] = convex_update(out.maps[s][i], y0.maps[s][i], c);
  }
  return out;
}

namespace {

std::size_t pseudo_index(const PseudoLabelSet& pseudo, const std::string& id, std::size_t hint) {
  if (hint < pseudo.sample_ids.size() && pseudo.sample_ids[hint] == id) return hint;
  auto it = std::find(pseudo.sample_ids.begin(), pseudo.sample_ids.end(), id);
  if (it == pseudo.sample_ids.end()) throw DataError("no pseudo label for target sample " + id);
  return static_cast<std::size_t>(it - pseudo.sample_ids.begin());
}

}  // namespace

Dataset build_mixed_dataset(const Dataset& source, const UnlabeledDataset& target, const PseudoLabelSet& pseudo,
                            double threshold) {
  Dataset out;
  out.reserve(source.size() + target.size());
  for (const auto& s : source) {
    if (!s.label) throw DataError("mixed dataset: source sample " + s.sample_id + " has no label");
    out.push_back(s);
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& t = target[i];
    const std::size_t k = pseudo_index(pseudo, t.sample_id, i);
    if (pseudo.height != t.image.height || pseudo.width != t.image.width) {
      throw ShapeError("mixed dataset: pseudo label shape differs for " + t.sample_id);
    }
    out.push_back({t.image, threshold_map(pseudo.maps[k], pseudo.height, pseudo.width, threshold), Domain::kTarget,
                   t.sample_id, t.class_tag});
  }
  return out;
}

namespace {

std::vector<TrainSample> mixed_samples(const Dataset& source, const UnlabeledDataset& target,
                                       const PseudoLabelSet& pseudo, const SelfCorrectionConfig& cfg) {
  const Dataset src = cfg.positive_source_only ? positive_only(source) : source;
  if (!cfg.soft_targets) return to_train_samples(build_mixed_dataset(src, target, pseudo, cfg.pseudo_threshold));
  std::vector<TrainSample> out = to_train_samples(src);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::size_t k = pseudo_index(pseudo, target[i].sample_id, i);
    out.push_back({target[i].image, std::nullopt, Slice{pseudo.height, pseudo.width, pseudo.maps[k]},
                   target[i].sample_id});
  }
  return out;
}

double max_change(const PseudoLabelSet& a, const PseudoLabelSet& b) {
  double m = 0.0;
  for (std::size_t s = 0; s < a.maps.size(); ++s) {
    for (std::size_t i = 0; i < a.maps[s].size(); ++i) m = std::max(m, std::abs(a.maps[s][i] - b.maps[s][i]));
  }
  return m;
}

}  // namespace

SelfCorrectionResult run_self_correction(const ParameterVector& w0, const Dataset& source,
                                         const UnlabeledDataset& target, const SelfCorrectionConfig& cfg,
                                         const TrainingConfig& train_cfg, const SelfCorrectionRunOptions& opts) {
  cfg.validate();
  train_cfg.validate();
  if (target.empty()) throw DataError("self-correction needs target samples");
  DascModel model(train_cfg.arch(), train_cfg.seed);
  model.load(w0);
  const Predictor predict = make_predictor(model, PredictionHead::kMajor, true);

  SelfCorrectionResult res;
  res.initial_labels = generate_pseudo_labels(predict, target, cfg.tta_flip_h, cfg.tta_flip_v);
  res.initial_labels.cycle = 0;
  PseudoLabelSet labels = res.initial_labels;
  ParameterVector weights = w0;

  // Cycle c trains from its aggregated initialization. The trained weights then
  // produce fresh labels and are folded with w0 into the next cycle's start,
  // hence index c + 1 (cycle 1 starts from w0 itself).
  for (int c = 1; c <= cfg.cycles; ++c) {
    CycleRecord rec;
    rec.cycle = c;
    const auto mixed = mixed_samples(source, target, labels, cfg);
    rec.losses = train_segmentation(model, mixed, cfg.epochs_per_cycle, train_cfg, static_cast<std::uint64_t>(c));
    const PseudoLabelSet fresh = generate_pseudo_labels(predict, target, cfg.tta_flip_h, cfg.tta_flip_v);
    weights = aggregate_weights(model.params(), w0, c + 1);
    model.load(weights);
    PseudoLabelSet next = aggregate_labels(fresh, res.initial_labels, c + 1);
    next.cycle = c;
    next.provenance = fresh.provenance + "; cycle " + std::to_string(c);
    rec.label_change = max_change(next, labels);
    labels = std::move(next);
    spdlog::debug("self-correction cycle {} / {}: max label change {:.4f}", c, cfg.cycles, rec.label_change);

    if (!opts.checkpoint_dir.empty()) {
      const fs::path dir = opts.checkpoint_dir / ("cycle_" + std::to_string(c));
      CheckpointManifest m;
      m.stage = "self-correct";
      m.preset = train_cfg.arch_preset;
      m.height = train_cfg.height;
      m.width = train_cfg.width;
      m.seed = train_cfg.seed;
      m.cycle = c;
      m.config_hash = opts.config_hash;
      save_checkpoint(dir, weights, m);
      write_pseudo_archive(dir / "pseudo", labels);
    }
    if (opts.on_cycle) opts.on_cycle(c, model, labels);
    res.history.push_back(std::move(rec));
  }
  res.weights = std::move(weights);
  res.labels = std::move(labels);
  return res;
}

void write_pseudo_archive(const fs::path& dir, const PseudoLabelSet& labels) {
  labels.validate();
  fs::create_directories(dir);
  std::vector<NamedArray> arrays;
  for (std::size_t i = 0; i < labels.maps.size(); ++i) {
    std::vector<std::uint8_t> px(labels.maps[i].size());
    for (std::size_t k = 0; k < px.size(); ++k) px[k] = static_cast<std::uint8_t>(std::lround(labels.maps[i][k] * 255.0));
    write_png_gray8(dir / (labels.sample_ids[i] + ".png"), labels.height, labels.width, px);
    arrays.push_back({labels.sample_ids[i], Tensor({labels.height, labels.width}, labels.maps[i]), false});
  }
  write_named_arrays(dir / "pseudo_labels.h5", arrays);
  nlohmann::json j{{"cycle", labels.cycle},
                   {"height", labels.height},
                   {"width", labels.width},
                   {"provenance", labels.provenance},
                   {"png_quantization", "uint8 = round(255 * p); exact values in pseudo_labels.h5"},
                   {"sample_ids", labels.sample_ids}};
  std::ofstream(dir / "pseudo_labels.json") << j.dump(2) << "\n";
}

PseudoLabelSet read_pseudo_archive(const fs::path& dir) {
  std::ifstream in(dir / "pseudo_labels.json");
  if (!in) throw DataError("no pseudo-label archive in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  PseudoLabelSet p;
  p.cycle = j.at("cycle").get<int>();
  p.height = j.at("height").get<int>();
  p.width = j.at("width").get<int>();
  p.provenance = j.at("provenance").get<std::string>();
  p.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
  std::map<std::string, std::vector<double>> by_id;
  for (auto& a : read_named_arrays(dir / "pseudo_labels.h5")) by_id[a.name] = a.value.vec();
  for (const auto& id : p.sample_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("pseudo-label archive is missing " + id);
    p.maps.push_back(it->second);
  }
  return p;
}

}  // namespace dasc
