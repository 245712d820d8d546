#include <gtest/gtest.h>

#include <filesystem>

#include "dasc/error.hpp"
#include "dasc/slice_cache.hpp"
#include "dasc/synthbench.hpp"

using namespace dasc;
namespace fs = std::filesystem;

namespace {

SynthSpec tiny(std::uint64_t seed = 3) {
  SynthSpec s;
  s.height = s.width = 32;
  s.n_samples = 24;
  s.seed = seed;
  return s;
}

TEST(Synth, AllNegativeSpec) {
  SynthSpec s = tiny();
  s.fraction_negative = 1.0;
  const auto d = generate(s);
  for (const auto* ds : {&d.source, &d.target})
    for (const auto& x : *ds) {
      ASSERT_TRUE(x.label.has_value());
      EXPECT_TRUE(x.label->empty());
      EXPECT_EQ(x.class_tag, ClassTag::kNegative);
    }
}

TEST(Synth, ZeroShiftWhenProfilesAndGeometryShared) {
  SynthSpec s = tiny();
  s.target = s.source;
  s.share_geometry = true;
  const auto d = generate(s);
  ASSERT_EQ(d.source.size(), d.target.size());
  for (std::size_t i = 0; i < d.source.size(); ++i) {
    EXPECT_EQ(d.source[i].image, d.target[i].image);
    EXPECT_EQ(*d.source[i].label, *d.target[i].label);
  }
}

TEST(Synth, DeterministicAndIndexAddressable) {
  const SynthSpec s = tiny(9);
  const auto a = generate(s), b = generate(s);
  for (std::size_t i = 0; i < a.source.size(); ++i) {
    EXPECT_EQ(a.source[i].image, b.source[i].image);
    EXPECT_EQ(a.target[i].image, b.target[i].image);
  }
  const auto one = generate_sample(s, Domain::kTarget, 5);
  EXPECT_EQ(one.image, a.target[5].image);
  EXPECT_EQ(one.sample_id, a.target[5].sample_id);
}

TEST(Synth, TargetForegroundMeanMatchesProfile) {
  SynthSpec s = tiny(4);
  s.height = s.width = 64;
  s.n_samples = 60;
  s.source.fg_mean = 0.7;
  s.source.noise_sigma = 0.05;
  s.target.fg_mean = 0.4;
  s.target.noise_sigma = 0.15;
  const auto st = domain_stats(generate(s).target);
  EXPECT_NEAR(st.mean_fg_intensity, 0.4, 0.02);
  EXPECT_GT(st.positives, 0);
  EXPECT_GT(st.negatives, 0);
}

TEST(Synth, ShiftMonotoneInIntensityGap) {
  double prev = -1.0;
  for (double gap : {0.0, 0.1, 0.2, 0.3}) {
    SynthSpec s = tiny(5);
    s.target = s.source;
    s.target.fg_mean = s.source.fg_mean - gap;
    s.target.bg_mean = s.source.bg_mean + gap / 4;
    const auto d = generate(s);
    const double dist = histogram_distance(d.source, d.target);
    EXPECT_GT(dist, prev) << "gap " << gap;
    prev = dist;
  }
}

TEST(Synth, ValuesInRangeAndMasksBinary) {
  for (const SynthSpec& s : {shift_mild(), shift_strong()}) {
    SynthSpec t = s;
    t.n_samples = 12;
    const auto d = generate(t);
    for (const auto& x : d.source) {
      for (double v : x.image.pixels) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      for (auto v : x.label->pixels) ASSERT_TRUE(v == 0 || v == 1);
      EXPECT_EQ(x.class_tag == ClassTag::kPositive, !x.label->empty());
    }
  }
}

TEST(Synth, InfeasibleSpecRejected) {
  SynthSpec s = tiny();
  s.blob_scale_max = 0.6;
  EXPECT_THROW(generate(s), ConfigError);
  s = tiny();
  s.fraction_negative = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(synth_preset("shift-huge"), ConfigError);
}

TEST(Synth, PresetsArePinned) {
  EXPECT_EQ(synth_preset("shift-mild").seed, shift_mild().seed);
  EXPECT_NE(shift_mild().seed, shift_strong().seed);
  EXPECT_LT(shift_strong().target.fg_mean, shift_mild().target.fg_mean);
}

TEST(Synth, StrongPresetShiftsFurtherThanMild) {
  SynthSpec mild = shift_mild(), strong = shift_strong();
  mild.n_samples = strong.n_samples = 60;
  const auto a = generate(mild), b = generate(strong);
  EXPECT_GT(histogram_distance(b.source, b.target), histogram_distance(a.source, a.target));
}

TEST(Synth, CacheRoundTripIsBitExact) {
  const fs::path dir = fs::temp_directory_path() / "dasc_test_synth_cache";
  fs::remove_all(dir);
  SynthSpec s = tiny(6);
  s.n_samples = 10;
  const auto d = generate(s);
  const std::size_t written = write_slice_cache(dir, d.source, d.target);
  EXPECT_GT(written, 0u);
  EXPECT_EQ(write_slice_cache(dir, d.source, d.target), 0u);  // unchanged content is skipped

  const SliceCache c = read_slice_cache(dir);
  ASSERT_EQ(c.source.size(), d.source.size());
  ASSERT_EQ(c.target.size(), d.target.size());
  for (std::size_t i = 0; i < d.source.size(); ++i) {
    EXPECT_EQ(c.source[i].image, d.source[i].image);
    EXPECT_EQ(*c.source[i].label, *d.source[i].label);
    EXPECT_EQ(c.source[i].class_tag, d.source[i].class_tag);
    EXPECT_EQ(c.target[i].image, d.target[i].image);
    EXPECT_EQ(c.heldout.at(d.target[i].sample_id), *d.target[i].label);
  }
  const Dataset joined = attach_heldout(c.target, c.heldout);
  EXPECT_EQ(*joined[3].label, *d.target[3].label);
  fs::remove_all(dir);
}

TEST(Cache, QuantizationGrid) {
  EXPECT_EQ(quantize16(0.0), 0);
  EXPECT_EQ(quantize16(1.0), 65535);
  EXPECT_EQ(quantize16(123.0 / 65535.0), 123);
  EXPECT_EQ(quantize16(0.5), 32768);
  EXPECT_THROW(quantize16(1.5), DataError);
  EXPECT_EQ(quantize_value16(0.5), 32768.0 / 65535.0);
}

}  // namespace
