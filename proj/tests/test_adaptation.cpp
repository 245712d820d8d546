#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dasc/adaptation.hpp"
#include "dasc/error.hpp"
#include "dasc/synthbench.hpp"

using namespace dasc;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  SynthData data;
  TrainingConfig cfg;
  ParameterVector cam;
};

Fixture small_setup(std::uint64_t seed = 5, int n = 12) {
  SynthSpec spec = shift_strong();
  spec.height = spec.width = 32;
  spec.n_samples = n;
  spec.seed = seed;
  Fixture f{generate(spec), {}, {}};
  f.cfg.height = f.cfg.width = 32;
  f.cfg.seed = seed;
  f.cfg.epochs_da = 1;
  f.cfg.epochs_cam = 0;
  f.cam = train_cam_extractor(f.data.source, f.cfg);
  return f;
}

double checksum(const ParameterVector& p) {
  double s = 0.0;
  for (const auto& e : p.entries())
    for (std::size_t i = 0; i < e.value.size(); ++i) s += e.value[i] * static_cast<double>(i % 7 + 1);
  return s;
}

TEST(Adaptation, ConfigDefaultsAndValidation) {
  TrainingConfig c;
  EXPECT_EQ(c.lr_generator, 2.5e-4);
  EXPECT_EQ(c.lr_discriminators, 1e-4);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.epochs_da, 100);
  EXPECT_TRUE(c.uses_major_branch());
  c.base_da_mode = true;
  EXPECT_FALSE(c.uses_major_branch());
  EXPECT_FALSE(c.uses_feature_alignment());
  c.height = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainingConfig src_only;
  src_only.loss.adv_seg = src_only.loss.adv_fea = 0.0;
  EXPECT_FALSE(src_only.needs_target());
}

TEST(Adaptation, IterationsCoverLargerDomain) {
  auto f = small_setup(6, 12);
  f.cfg.positive_source_only = false;
  AfdDaTrainer t(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  EXPECT_EQ(t.iterations_per_epoch(), 3);  // ceil(12 / 4)
  const auto idx = batch_indices(5, 4, 3, 1, 1, 0, 2);
  EXPECT_EQ(idx.size(), 4u);
  for (auto i : idx) EXPECT_LT(i, 5u);
}

TEST(Adaptation, FreezeAuditPerPhase) {
  auto f = small_setup();
  AfdDaTrainer t(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  double gen_before = 0, disc_before = 0;
  int violations = 0, calls = 0;
  auto snapshot = [&] {
    gen_before = checksum(t.model().params());
    disc_before = checksum(get_params(t.discriminators().group()));
  };
  t.set_phase_hook([&](AfdDaTrainer::Phase ph) {
    ++calls;
    const double g = checksum(t.model().params()), d = checksum(get_params(t.discriminators().group()));
    if (ph == AfdDaTrainer::Phase::kGeneratorUpdated) {
      violations += d != disc_before;
      violations += g == gen_before;  // the generator did move
    } else {
      violations += g != gen_before;
      violations += d == disc_before;
    }
    gen_before = g;
    disc_before = d;
  });
  for (int i = 0; i < 3; ++i) {
    snapshot();
    t.step();
  }
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(violations, 0);
  // CAM extractor stays frozen throughout
  EXPECT_EQ(t.model().params().select(Role::kCamExtractor), f.cam);
}

TEST(Adaptation, TargetIgnoredWithoutAdversarialTerms) {
  auto f = small_setup();
  f.cfg.loss.adv_seg = f.cfg.loss.adv_fea = 0.0;
  SynthSpec other = shift_mild();
  other.height = other.width = 32;
  other.n_samples = 12;
  other.seed = 999;
  const auto alt = generate(other);
  auto a = train_afd_da(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  auto b = train_afd_da(f.data.source, strip_labels(alt.target), f.cam, f.cfg);
  EXPECT_EQ(a.generator, b.generator);
  // and with adversarial terms on, the target matters
  f.cfg.loss.adv_seg = 0.001;
  a = train_afd_da(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  b = train_afd_da(f.data.source, strip_labels(alt.target), f.cam, f.cfg);
  EXPECT_NE(a.generator, b.generator);
}

TEST(Adaptation, DeterministicAcrossRuns) {
  auto f = small_setup();
  const auto a = train_afd_da(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  const auto b = train_afd_da(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  EXPECT_EQ(a.generator, b.generator);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].da, b.history[i].da);
}

TEST(Adaptation, ResumeReproducesNextStep) {
  auto f = small_setup();
  f.cfg.epochs_da = 2;
  const fs::path dir = fs::temp_directory_path() / "dasc_test_resume";
  fs::remove_all(dir);
  AfdDaTrainer straight(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  for (int i = 0; i < 3; ++i) straight.step();
  straight.save(dir);
  const LossRecord expect = straight.step();

  AfdDaTrainer resumed(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  resumed.resume(dir);
  EXPECT_EQ(resumed.state().iteration, 3);
  const LossRecord got = resumed.step();
  EXPECT_EQ(got.da, expect.da);
  EXPECT_EQ(got.d_mask, expect.d_mask);
  EXPECT_EQ(got.d_feature, expect.d_feature);
  EXPECT_EQ(resumed.model().params(), straight.model().params());
  fs::remove_all(dir);
}

TEST(Adaptation, NanAbortsWithSnapshot) {
  auto f = small_setup();
  f.cfg.lr_generator = 1e250;
  f.cfg.epochs_da = 3;
  const fs::path dir = fs::temp_directory_path() / "dasc_test_nan";
  fs::remove_all(dir);
  AfdDaTrainer t(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  DaRunOptions opts;
  opts.checkpoint_dir = dir;
  EXPECT_THROW(t.run(opts), NumericalError);
  EXPECT_TRUE(fs::exists(dir / "nan_snapshot" / "train_state.h5"));
  fs::remove_all(dir);
}

TEST(Adaptation, LossesFiniteOverManySteps) {
  auto f = small_setup(8, 16);
  f.cfg.epochs_da = 50;  // 4 iterations per epoch
  AfdDaTrainer t(f.data.source, strip_labels(f.data.target), f.cam, f.cfg);
  DaRunOptions opts;
  opts.stop_at = 200;
  const auto r = t.run(opts);
  ASSERT_EQ(r.history.size(), 200u);
  for (const auto& rec : r.history) {
    ASSERT_TRUE(std::isfinite(rec.da) && std::isfinite(rec.d_mask) && std::isfinite(rec.d_feature));
  }
}

TEST(CamExtractor, ZeroEpochsAndSingleClass) {
  auto f = small_setup();
  DascModel fresh(f.cfg.arch(), f.cfg.seed);
  EXPECT_EQ(f.cam, fresh.params().select(Role::kCamExtractor));
  Dataset one_class = positive_only(f.data.source);
  EXPECT_THROW(train_cam_extractor(one_class, f.cfg), DataError);
}

TEST(CamExtractor, LearnsHeldOutSourceTags) {
  SynthSpec spec = shift_mild();
  spec.n_samples = 200;
  const auto data = generate(spec);
  Dataset held;
  for (int i = 0; i < 60; ++i) held.push_back(generate_sample(spec, Domain::kSource, 1000 + i));
  TrainingConfig cfg;
  cfg.seed = 1;
  cfg.epochs_cam = 3;  // 200 slices make a short epoch
  const auto a = train_cam_extractor(data.source, cfg);
  EXPECT_EQ(a, train_cam_extractor(data.source, cfg));
  EXPECT_GT(cam_accuracy(a, held, cfg), 0.9);
}

TEST(LossLog, CsvShape) {
  LossRecord r;
  r.step = 3;
  r.da = 0.25;
  const std::string h = loss_csv_header(), row = loss_csv_row(r);
  EXPECT_EQ(std::count(h.begin(), h.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(h.rfind("step,lr,", 0), 0u);
}

}  // namespace
