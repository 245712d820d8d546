// dascseg: command-line driver for the two-stage pipeline.
//
// Every command reads the run config, writes its outputs under --out and
// leaves a frozen config copy plus run_manifest.json next to them. Stages talk to
// each other through paths only:
//
//   <out>/cache/            preprocess | synth
//   <out>/cam/              train-cam
//   <out>/afd_da/           train-da
//   <out>/self_correct/     self-correct (cycle_<c>/ and final/)
//   <out>/eval/             eval

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dasc/adaptation.hpp"
#include "dasc/checkpoint.hpp"
#include "dasc/config.hpp"
#include "dasc/error.hpp"
#include "dasc/evalmetrics.hpp"
#include "dasc/hashing.hpp"
#include "dasc/ingest.hpp"
#include "dasc/selfcorrect.hpp"
#include "dasc/slice_cache.hpp"
#include "dasc/synthbench.hpp"

using namespace dasc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset;
  bool verbose = false;
};

struct Run {
  RunConfig cfg;
  fs::path out;
  std::string hash;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  fs::path cache_dir() const { return cfg.data.cache_dir.is_absolute() ? cfg.data.cache_dir : out / cfg.data.cache_dir; }
  fs::path stage(const char* name) const { return out / name; }
};

Run resolve(const Args& a) {
  Run r;
  r.cfg = a.config.empty() ? RunConfig::parse("") : RunConfig::load(a.config);
  if (!a.preset.empty()) r.cfg.set_preset(preset_from_name(a.preset));
  if (a.seed) r.cfg.set_seed(*a.seed);
  if (!a.out.empty()) r.cfg.out_dir = a.out;
  r.cfg.validate();
  r.out = r.cfg.out_dir;
  r.hash = r.cfg.hash();
  return r;
}

json lambdas(const TrainingConfig& t) {
  return {{"seg", t.loss.seg}, {"weight", t.loss.weight}, {"adv_seg", t.loss.adv_seg},
          {"adv_fea", t.loss.adv_fea}, {"dis", t.loss.dis}};
}

// Frozen config copy and manifest for one command's output directory.
void write_provenance(const Run& r, const fs::path& dir, const std::string& command, json extra = json::object()) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << r.cfg.to_ini();
  json m{{"command", command},
         {"version", kVersion},
         {"config_hash", r.hash},
         {"seed", r.cfg.seed},
         {"preset", preset_name(r.cfg.train.arch_preset)},
         {"resolution", {r.cfg.train.height, r.cfg.train.width}},
         {"lambdas", lambdas(r.cfg.train)},
         {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - r.t0).count()}};
  m.update(extra);
  std::ofstream(dir / "run_manifest.json") << m.dump(2) << "\n";
}

SliceCache need_cache(const Run& r) {
  const fs::path dir = r.cache_dir();
  if (!fs::exists(dir / "index.json")) {
    throw DataError("no slice cache at " + dir.string() + "; run `dascseg preprocess` or `dascseg synth` first");
  }
  return read_slice_cache(dir);
}

ParameterVector need_checkpoint(const fs::path& dir, const char* producer, CheckpointManifest* m = nullptr) {
  if (!fs::exists(dir / "manifest.json")) {
    throw DataError("no checkpoint at " + dir.string() + "; run `dascseg " + producer + "` first");
  }
  return load_checkpoint(dir, m);
}

CheckpointManifest manifest_for(const Run& r, const std::string& stage) {
  CheckpointManifest m;
  m.stage = stage;
  m.preset = r.cfg.train.arch_preset;
  m.height = r.cfg.train.height;
  m.width = r.cfg.train.width;
  m.seed = r.cfg.train.seed;
  m.config_hash = r.hash;
  return m;
}

Dataset labelled(const SliceCache& c) {
  Dataset out;
  for (const auto& s : c.source) {
    if (s.label) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_preprocess(const Run& r) {
  const auto& d = r.cfg.data;
  if (d.source_images.empty() || d.target_images.empty()) {
    throw ConfigError("preprocess needs data.source_images and data.target_images (or use `dascseg synth`)");
  }
  if (d.source_labels.empty()) throw ConfigError("preprocess needs data.source_labels for the source scans");
  IngestOptions io;
  io.height = r.cfg.train.height;
  io.width = r.cfg.train.width;
  io.lung_fallback = d.lung_fallback;
  io.crop_margin = d.crop_margin;
  io.resize_mode = d.resize_mode;
  io.hu_lo = d.hu_lo;
  io.hu_hi = d.hu_hi;
  const Dataset src = ingest_scans(d.source_images, d.source_labels, d.source_lungs, Domain::kSource, io);
  const Dataset tgt = ingest_scans(d.target_images, d.target_labels, d.target_lungs, Domain::kTarget, io);
  const std::size_t written = write_slice_cache(r.cache_dir(), src, tgt, {d.hu_lo, d.hu_hi});
  spdlog::info("preprocess: {} source and {} target slices, {} files written to {}", src.size(), tgt.size(), written,
               r.cache_dir().string());
  write_provenance(r, r.cache_dir(), "preprocess",
                   {{"source_slices", src.size()}, {"target_slices", tgt.size()}, {"files_written", written},
                    {"hu_window", {d.hu_lo, d.hu_hi}}});
  return 0;
}

json stats_json(const DomainStats& s) {
  return {{"positives", s.positives},
          {"negatives", s.negatives},
          {"mean_fg_intensity", s.mean_fg_intensity},
          {"mean_bg_intensity", s.mean_bg_intensity},
          {"fg_fraction_hist", s.fg_fraction_hist}};
}

std::string dataset_hash(const Dataset& a, const Dataset& b) {
  std::string joined;
  for (const Dataset* ds : {&a, &b}) {
    for (const auto& s : *ds) {
      joined += s.sample_id + ":" + sha256_hex(s.image.pixels);
      if (s.label) joined += ":" + sha256_hex(std::string_view(reinterpret_cast<const char*>(s.label->pixels.data()),
                                                                s.label->pixels.size()));
      joined += "\n";
    }
  }
  return sha256_hex(joined);
}

int cmd_synth(const Run& r) {
  const SynthSpec& spec = r.cfg.synth.spec;
  const SynthData data = generate(spec);
  const std::size_t written = write_slice_cache(r.cache_dir(), data.source, data.target);
  const DomainStats ss = domain_stats(data.source), ts = domain_stats(data.target);
  const double dist = histogram_distance(data.source, data.target);
  const std::string h = dataset_hash(data.source, data.target);

  std::printf("%-7s %9s %9s %8s %8s  fg-fraction histogram (10 bins over [0,0.5])\n", "domain", "positive",
              "negative", "fg mean", "bg mean");
  for (const auto& [name, s] : {std::pair{"source", ss}, std::pair{"target", ts}}) {
    std::printf("%-7s %9d %9d %8.3f %8.3f ", name, s.positives, s.negatives, s.mean_fg_intensity,
                s.mean_bg_intensity);
    for (int v : s.fg_fraction_hist) std::printf(" %d", v);
    std::printf("\n");
  }
  std::printf("inter-domain histogram distance %.5f\ndataset sha256 %s\n", dist, h.c_str());

  json stats{{"preset", r.cfg.synth.preset},
             {"seed", spec.seed},
             {"source", stats_json(ss)},
             {"target", stats_json(ts)},
             {"histogram_distance", dist},
             {"dataset_sha256", h}};
  fs::create_directories(r.cache_dir());
  std::ofstream(r.cache_dir() / "stats.json") << stats.dump(2) << "\n";
  write_provenance(r, r.cache_dir(), "synth", {{"files_written", written}, {"dataset_sha256", h}});
  return 0;
}

int cmd_train_cam(const Run& r) {
  const SliceCache cache = need_cache(r);
  const Dataset src = labelled(cache);
  const ParameterVector cam = train_cam_extractor(src, r.cfg.train);
  const double acc = cam_accuracy(cam, src, r.cfg.train);
  const fs::path dir = r.stage("cam");
  save_checkpoint(dir, cam, manifest_for(r, "cam"));
  spdlog::info("train-cam: source tag accuracy {:.3f}, checkpoint in {}", acc, dir.string());
  write_provenance(r, dir, "train-cam", {{"source_tag_accuracy", acc}, {"epochs", r.cfg.train.epochs_cam}});
  return 0;
}

int cmd_train_da(const Run& r) {
  const SliceCache cache = need_cache(r);
  const ParameterVector cam = need_checkpoint(r.stage("cam"), "train-cam");
  const fs::path dir = r.stage("afd_da");
  fs::create_directories(dir);
  DaRunOptions opts;
  opts.checkpoint_dir = dir / "checkpoints";
  opts.checkpoint_every = r.cfg.checkpoint_every;
  opts.loss_csv = dir / "loss.csv";
  const DaResult res = train_afd_da(labelled(cache), cache.target, cam, r.cfg.train, opts);
  CheckpointManifest m = manifest_for(r, "afd-da");
  m.head = r.cfg.train.base_da_mode || !r.cfg.train.cam_branch ? "aux_mean" : "major";
  save_checkpoint(dir / "final", res.generator, m);
  spdlog::info("train-da: {} iterations, final generator in {}", res.state.iteration, (dir / "final").string());
  write_provenance(r, dir, "train-da", {{"iterations", res.state.iteration}, {"head", m.head}});
  return 0;
}

Dataset eval_set(const SliceCache& cache) {
  if (cache.heldout.empty()) throw DataError("the slice cache has no held-out target labels to evaluate against");
  return attach_heldout(cache.target, cache.heldout);
}

int cmd_self_correct(const Run& r) {
  const SliceCache cache = need_cache(r);
  const ParameterVector w0 = need_checkpoint(r.stage("afd_da") / "final", "train-da");
  const fs::path dir = r.stage("self_correct");
  SelfCorrectionRunOptions opts;
  opts.checkpoint_dir = dir;
  opts.config_hash = r.hash;
  const auto res = run_self_correction(w0, labelled(cache), cache.target, r.cfg.selfcorrect, r.cfg.train, opts);
  CheckpointManifest m = manifest_for(r, "self-correct");
  m.cycle = r.cfg.selfcorrect.cycles;
  save_checkpoint(dir / "final", res.weights, m);
  write_pseudo_archive(dir / "final" / "pseudo", res.labels);

  std::ofstream csv(dir / "cycles.csv");
  csv << "cycle,label_change,mean_loss\n";
  for (const auto& h : res.history) {
    double loss = 0.0;
    for (const auto& l : h.losses) loss += l.seg;
    csv << h.cycle << "," << h.label_change << "," << (h.losses.empty() ? 0.0 : loss / h.losses.size()) << "\n";
  }
  spdlog::info("self-correct: {} cycles, final model in {}", res.history.size(), (dir / "final").string());
  write_provenance(r, dir, "self-correct", {{"cycles", r.cfg.selfcorrect.cycles}});
  return 0;
}

// A polyline chart with labelled axes; enough for a Dice-per-cycle curve.
std::string svg_line_plot(const std::vector<std::pair<double, double>>& pts, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel) {
  const double W = 480, H = 320, L = 60, R = 20, T = 40, B = 50;
  double x0 = pts.front().first, x1 = x0, y0 = pts.front().second, y1 = y0;
  for (auto [x, y] : pts) {
    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (x1 == x0) x1 = x0 + 1;
  const double pad = std::max(1.0, 0.1 * (y1 - y0));
  y0 -= pad, y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y0 + (y1 - y0) * k / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  for (auto [x, y] : pts) {
    s << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n<text transform=\"translate(16," << (T + H - B) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n<polyline fill=\"none\" stroke=\"#1f77b4\" "
    << "stroke-width=\"2\" points=\"";
  for (auto [x, y] : pts) s << px(x) << "," << py(y) << " ";
  s << "\"/>\n";
  for (auto [x, y] : pts) s << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  s << "</svg>\n";
  return s.str();
}

MetricsReport eval_checkpoint(const Run& r, const fs::path& ckpt, const std::string& name, const Dataset& truth,
                              const fs::path& dir) {
  CheckpointManifest m;
  const ParameterVector params = load_checkpoint(ckpt, &m);
  TrainingConfig tc = r.cfg.train;
  tc.arch_preset = m.preset;
  tc.height = m.height;
  tc.width = m.width;
  DascModel model(tc.arch(), tc.seed);
  model.load(params);
  const Predictor p = make_predictor(model, m.head == "aux_mean" ? PredictionHead::kAuxMean : PredictionHead::kMajor);
  EvalOptions eo;
  eo.positive_only = r.cfg.eval.positive_only;
  eo.batch_size = r.cfg.eval.batch_size;
  eo.model_id = name;
  eo.config_hash = m.config_hash;
  MetricsReport rep = evaluate(p, truth, eo);
  rep.write(dir);

  // overlays for the first few scored slices
  Dataset shown;
  for (const auto& s : truth) {
    if (static_cast<int>(shown.size()) >= r.cfg.eval.overlays) break;
    if (!eo.positive_only || std::count(s.label->pixels.begin(), s.label->pixels.end(), 1) > 0) shown.push_back(s);
  }
  const auto masks = predict_masks(p, shown, eo.batch_size);
  fs::create_directories(dir / "overlays");
  for (std::size_t i = 0; i < shown.size(); ++i) {
    write_overlay(dir / "overlays" / (shown[i].sample_id + ".png"), shown[i].image, masks[i], *shown[i].label);
  }
  return rep;
}

int cmd_eval(const Run& r) {
  const SliceCache cache = need_cache(r);
  const Dataset truth = eval_set(cache);
  const fs::path sc = r.stage("self_correct");
  if (!fs::exists(sc / "final" / "manifest.json")) {
    throw DataError("no self-correction checkpoint at " + (sc / "final").string() +
                    "; run `dascseg self-correct` first");
  }
  const fs::path dir = r.stage("eval");

  std::vector<std::pair<std::string, fs::path>> named;
  if (fs::exists(r.stage("afd_da") / "final" / "manifest.json")) named.emplace_back("afd_da", r.stage("afd_da") / "final");
  named.emplace_back("self_correct", sc / "final");
  for (const auto& entry : r.cfg.eval.compare) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("eval.compare entry '" + entry + "' is not name=path");
    named.emplace_back(entry.substr(0, eq), fs::path(entry.substr(eq + 1)));
  }

  json table = json::array();
  fs::create_directories(dir);
  std::ofstream csv(dir / "comparison.csv");
  csv << "model,dice,sen,spc,ja,hd,n\n";
  for (const auto& [name, path] : named) {
    const MetricsReport rep = eval_checkpoint(r, path, name, truth, dir / name);
    const auto& mm = rep.mean;
    csv << name << "," << mm.dice << "," << mm.sen << "," << mm.spc << "," << mm.ja << "," << mm.hd << ","
        << rep.samples.size() << "\n";
    table.push_back({{"model", name},
                     {"checkpoint", path.string()},
                     {"dice", mm.dice},
                     {"sen", mm.sen},
                     {"spc", mm.spc},
                     {"ja", mm.ja},
                     {"hd", mm.hd},
                     {"n", rep.samples.size()}});
    spdlog::info("eval {:<14} Dice {:.4f}  HD {:.2f}", name, mm.dice, mm.hd);
  }
  std::ofstream(dir / "comparison.json") << table.dump(2) << "\n";

  // Dice per cycle; cycle 0 is the adapted model the cycles start from
  std::vector<std::pair<double, double>> curve;
  json per_cycle = json::array();
  auto add_point = [&](int c, const fs::path& ckpt) {
    const MetricsReport rep = eval_checkpoint(r, ckpt, "cycle_" + std::to_string(c), truth, dir / "cycles" /
                                                                                           ("cycle_" + std::to_string(c)));
    curve.emplace_back(c, 100.0 * rep.mean.dice);
    per_cycle.push_back({{"cycle", c}, {"dice", rep.mean.dice}});
  };
  if (fs::exists(r.stage("afd_da") / "final" / "manifest.json")) add_point(0, r.stage("afd_da") / "final");
  for (int c = 1;; ++c) {
    const fs::path p = sc / ("cycle_" + std::to_string(c));
    if (!fs::exists(p / "manifest.json")) break;
    add_point(c, p);
  }
  std::ofstream(dir / "dice_per_cycle.json") << per_cycle.dump(2) << "\n";
  std::ofstream cc(dir / "dice_per_cycle.csv");
  cc << "cycle,dice\n";
  for (auto [c, d] : curve) cc << c << "," << d / 100.0 << "\n";
  if (!curve.empty()) {
    std::ofstream(dir / "dice_per_cycle.svg") << svg_line_plot(curve, "Target Dice per self-correction cycle",
                                                               "cycle", "Dice (%)");
  }
  write_provenance(r, dir, "eval", {{"models", table}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DASC-Net segmentation under domain shift"};
  app.require_subcommand(1);
  Args args;
  app.add_option("--config", args.config, "run configuration (INI)")->check(CLI::ExistingFile);
  app.add_option("--out", args.out, "output directory (overrides out_dir)");
  app.add_option("--seed", args.seed, "global seed for every component");
  app.add_option("--preset", args.preset, "network preset")->check(CLI::IsMember({"small", "paper"}));
  app.add_flag("-v,--verbose", args.verbose, "debug logging");

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Run&);
  };
  const Cmd cmds[] = {
      {"preprocess", "NIfTI volumes to the slice cache", cmd_preprocess},
      {"synth", "materialize the synthetic benchmark into the slice cache", cmd_synth},
      {"train-cam", "train the CAM extractor on source image tags", cmd_train_cam},
      {"train-da", "adversarial domain adaptation", cmd_train_da},
      {"self-correct", "self-correction cycles from the adapted model", cmd_self_correct},
      {"eval", "score checkpoints on held-out target labels", cmd_eval},
  };
  for (const auto& c : cmds) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(args.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const Run run = resolve(args);
    for (const auto& c : cmds) {
      if (app.got_subcommand(c.name)) return c.fn(run);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "dascseg: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dascseg: %s\n", e.what());
    return 1;
  }
  return 1;
}
