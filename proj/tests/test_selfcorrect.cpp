#include <gtest/gtest.h>

#include <filesystem>

#include "dasc/error.hpp"
#include "dasc/selfcorrect.hpp"
#include "dasc/synthbench.hpp"

using namespace dasc;
namespace fs = std::filesystem;

namespace {

UnlabeledDataset images(int n, int h, int w, std::uint64_t seed) {
  UnlabeledDataset ds(static_cast<std::size_t>(n));
  Rng rng = make_rng(seed, {});
  for (int i = 0; i < n; ++i) {
    ds[i].image = Slice::zeros(h, w);
    for (auto& v : ds[i].image.pixels) v = uniform01(rng);
    ds[i].sample_id = "t" + std::to_string(i);
  }
  return ds;
}

PseudoLabelSet constant_set(int n, double v) {
  PseudoLabelSet p;
  p.height = 2;
  p.width = 3;
  for (int i = 0; i < n; ++i) {
    p.sample_ids.push_back("t" + std::to_string(i));
    p.maps.emplace_back(6, v);
  }
  return p;
}

TEST(ConvexUpdate, ScalarExamplesAreExact) {
  EXPECT_EQ(convex_update(5.0, 3.0, 1), 4.0);
  EXPECT_EQ(convex_update(0.0, 1.0, 9), 0.1);
  EXPECT_EQ(convex_update(0.9, 0.3, 2), 0.7);
  EXPECT_EQ(convex_update(1.0, 0.0, 9), 0.9);
  for (double x : {-3.5, 0.0, 1e-300, 7.25}) EXPECT_EQ(convex_update(x, x, 4), x);
  EXPECT_THROW(convex_update(1, 2, 0), ConfigError);
}

TEST(ConvexUpdate, StaysInHull) {
  Rng rng = make_rng(42, {});
  for (int i = 0; i < 100000; ++i) {
    const double a = uniform(rng, -1e3, 1e3) * (rng() % 5 == 0 ? 1e-200 : 1.0);
    const double b = uniform(rng, -1e3, 1e3);
    const int c = uniform_int(rng, 1, 1000);
    const double r = convex_update(a, b, c);
    ASSERT_GE(r, std::min(a, b));
    ASSERT_LE(r, std::max(a, b));
  }
}

TEST(Aggregate, WeightsAndLabels) {
  DascModel m(ArchConfig::small(32, 32), 1), n(ArchConfig::small(32, 32), 2);
  const auto a = m.params(), b = n.params();
  EXPECT_EQ(aggregate_weights(a, a, 5), a);
  const auto mid = aggregate_weights(a, b, 1);
  const auto& e = mid.entries()[0];
  for (std::size_t i = 0; i < e.value.size(); ++i)
    EXPECT_EQ(e.value[i], convex_update(a.entries()[0].value[i], b.entries()[0].value[i], 1));
  auto renamed = b;
  renamed.entries()[0].name = "x";
  EXPECT_THROW(aggregate_weights(a, renamed, 1), ShapeError);
  EXPECT_THROW(aggregate_weights(a, b, 0), ConfigError);

  const auto y = aggregate_labels(constant_set(3, 1.0), constant_set(3, 0.0), 9);
  for (const auto& map : y.maps)
    for (double v : map) EXPECT_EQ(v, 0.9);
  EXPECT_EQ(aggregate_labels(constant_set(2, 0.4), constant_set(2, 0.4), 3), constant_set(2, 0.4));
  EXPECT_THROW(aggregate_labels(constant_set(2, 0.4), constant_set(3, 0.4), 1), DataError);
}

TEST(Aggregate, LabelsStayInUnitIntervalAndConverge) {
  PseudoLabelSet y0 = constant_set(1, 0.0), fixed = constant_set(1, 1.0);
  Rng rng = make_rng(3, {});
  for (auto& v : y0.maps[0]) v = uniform01(rng);
  PseudoLabelSet y = y0;
  double prev_change = 1e9;
  for (int c = 1; c <= 200; ++c) {
    PseudoLabelSet next = aggregate_labels(fixed, y0, c);  // frozen stub: fresh labels never change
    double change = 0;
    for (std::size_t k = 0; k < 6; ++k) {
      ASSERT_GE(next.maps[0][k], 0.0);
      ASSERT_LE(next.maps[0][k], 1.0);
      change = std::max(change, std::abs(next.maps[0][k] - y.maps[0][k]));
    }
    EXPECT_LE(change, prev_change + 1e-15);
    prev_change = change;
    y = next;
  }
  EXPECT_LT(prev_change, 1e-4);
}

TEST(PseudoLabels, TtaStubCases) {
  const UnlabeledDataset ds = images(3, 4, 6, 7);
  Predictor identity = [](const Tensor& x) { return x; };
  const auto plain = generate_pseudo_labels(identity, ds, false, false);
  const auto tta = generate_pseudo_labels(identity, ds, true, true);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(plain.maps[i], ds[i].image.pixels);
    for (std::size_t k = 0; k < plain.maps[i].size(); ++k) EXPECT_NEAR(tta.maps[i][k], ds[i].image.pixels[k], 1e-15);
  }

  // A flip-sensitive stub still agrees on a mirror-symmetric image.
  UnlabeledDataset sym = images(1, 4, 6, 8);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) sym[0].image.at(r, 5 - c) = sym[0].image.at(r, c);
  Predictor skew = [](const Tensor& x) {
    Tensor y = x;
    for (int n = 0; n < x.n(); ++n)
      for (int r = 0; r < x.h(); ++r) y.at(n, 0, r, 0) = 0.0;  // zero the left column
    return y;
  };
  const auto one = generate_pseudo_labels(skew, sym, false, false);
  const auto both = generate_pseudo_labels(skew, sym, true, false);
  EXPECT_NE(one.maps[0], both.maps[0]);  // the stub is not symmetric...
  const auto mirrored = generate_pseudo_labels(identity, sym, true, false);
  EXPECT_EQ(mirrored.maps[0], generate_pseudo_labels(identity, sym, false, false).maps[0]);  // ...the image is
}

TEST(Mixed, SizeThresholdAndMissing) {
  SynthSpec s;
  s.height = s.width = 2;
  s.n_samples = 20;
  s.blob_scale_min = 0.01;
  s.blob_scale_max = 0.02;
  Dataset src(20);
  for (int i = 0; i < 20; ++i) {
    src[i].image = Slice::zeros(2, 3);
    src[i].label = BinaryMask::zeros(2, 3);
    src[i].sample_id = "s" + std::to_string(i);
  }
  const UnlabeledDataset tgt = images(30, 2, 3, 9);
  const auto mixed = build_mixed_dataset(src, tgt, constant_set(30, 0.6), 0.5);
  EXPECT_EQ(mixed.size(), 50u);
  EXPECT_EQ(mixed.back().domain, Domain::kTarget);
  EXPECT_EQ(mixed.back().label->count(), 6u);
  const auto tie = build_mixed_dataset(src, tgt, constant_set(30, 0.5), 0.5);
  EXPECT_EQ(tie.back().label->count(), 6u);
  const auto below = build_mixed_dataset(src, tgt, constant_set(30, std::nextafter(0.5, 0.0)), 0.5);
  EXPECT_EQ(below.back().label->count(), 0u);
  EXPECT_THROW(build_mixed_dataset(src, tgt, constant_set(29, 0.5), 0.5), DataError);
}

struct LoopFixture {
  SynthData data;
  TrainingConfig train;
  ParameterVector w0;
};

LoopFixture loop_setup(int n) {
  SynthSpec spec = shift_strong();
  spec.height = spec.width = 32;
  spec.n_samples = n;
  LoopFixture f{generate(spec), {}, {}};
  f.train.height = f.train.width = 32;
  f.train.seed = 4;
  DascModel m(f.train.arch(), 77);  // any weights will do
  f.w0 = m.params();
  return f;
}

TEST(Loop, ZeroEpochsIsAFixedPoint) {
  auto f = loop_setup(16);
  SelfCorrectionConfig cfg;
  cfg.epochs_per_cycle = 0;
  int calls = 0;
  SelfCorrectionRunOptions opts;
  opts.on_cycle = [&](int, const DascModel&, const PseudoLabelSet&) { ++calls; };
  const auto r = run_self_correction(f.w0, f.data.source, strip_labels(f.data.target), cfg, f.train, opts);
  EXPECT_EQ(calls, 9);
  EXPECT_EQ(r.weights, f.w0);
  EXPECT_EQ(r.labels, r.initial_labels);
  for (const auto& h : r.history) EXPECT_EQ(h.label_change, 0.0);
}

TEST(Loop, SingleCycleTrainsOnceAndCheckpoints) {
  auto f = loop_setup(8);
  SelfCorrectionConfig cfg;
  cfg.cycles = 1;
  cfg.epochs_per_cycle = 1;
  const fs::path dir = fs::temp_directory_path() / "dasc_test_sc";
  fs::remove_all(dir);
  SelfCorrectionRunOptions opts;
  opts.checkpoint_dir = dir;
  const auto r = run_self_correction(f.w0, f.data.source, strip_labels(f.data.target), cfg, f.train, opts);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_FALSE(r.history[0].losses.empty());
  EXPECT_NE(r.weights, f.w0);
  EXPECT_TRUE(fs::exists(dir / "cycle_1" / "manifest.json"));
  const auto back = read_pseudo_archive(dir / "cycle_1" / "pseudo");
  EXPECT_EQ(back, r.labels);
  EXPECT_FALSE(fs::exists(dir / "cycle_2"));
  fs::remove_all(dir);
}

// Replays cycle 1 outside the loop: train from w0 on source + Y0, then the
// next start is the (c+1 = 2) aggregate of the trained weights with w0.
TEST(Loop, FirstCycleMatchesHandReplay) {
  auto f = loop_setup(8);
  SelfCorrectionConfig cfg;
  cfg.cycles = 1;
  cfg.epochs_per_cycle = 1;
  const UnlabeledDataset target = strip_labels(f.data.target);
  const auto r = run_self_correction(f.w0, f.data.source, target, cfg, f.train);

  DascModel m(f.train.arch(), f.train.seed);
  m.load(f.w0);
  const Predictor p = make_predictor(m, PredictionHead::kMajor, true);
  const PseudoLabelSet y0 = generate_pseudo_labels(p, target, true, true);
  EXPECT_EQ(y0, r.initial_labels);
  const auto mixed = to_train_samples(build_mixed_dataset(positive_only(f.data.source), target, y0, 0.5));
  train_segmentation(m, mixed, 1, f.train, 1);
  const PseudoLabelSet fresh = generate_pseudo_labels(p, target, true, true);
  EXPECT_EQ(r.weights, aggregate_weights(m.params(), f.w0, 2));
  const PseudoLabelSet y1 = aggregate_labels(fresh, y0, 2);
  EXPECT_EQ(r.labels.maps, y1.maps);
}

TEST(Config, Validation) {
  SelfCorrectionConfig c;
  EXPECT_EQ(c.cycles, 9);
  EXPECT_EQ(c.epochs_per_cycle, 2);
  c.cycles = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
