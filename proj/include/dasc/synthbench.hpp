#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dasc/datapipe.hpp"

namespace dasc {

/// Appearance of one domain. Blobs stand in for lesions inside cropped lung.
struct DomainProfile {
  double fg_mean = 0.7;        // lesion intensity, per-sample mean
  double fg_std = 0.02;        // spread of the per-sample lesion mean
  double bg_mean = 0.25;       // parenchyma level
  double noise_sigma = 0.05;   // correlated texture noise, both regions
  double bg_gradient = 0.1;    // peak-to-peak linear ramp across the image
  double distractor_intensity = 0.8;  // small unlabeled bright spots (vessels)
};

struct SynthSpec {
  int height = 64;
  int width = 64;
  int n_samples = 100;  // per domain
  int blob_count_min = 1;
  int blob_count_max = 3;
  double blob_scale_min = 0.06;  // mean blob radius as a fraction of min(H, W)
  double blob_scale_max = 0.18;
  int distractor_count = 4;
  double feather_px = 1.5;       // halo width outside the support
  double intra_blob_gradient = 0.08;
  double fraction_negative = 0.25;
  /// When true, target sample i reuses source sample i's geometry.
  bool share_geometry = false;
  DomainProfile source;
  DomainProfile target{0.4, 0.02, 0.3, 0.15, 0.15, 0.6};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Pinned benchmark presets.
SynthSpec shift_mild();
SynthSpec shift_strong();
SynthSpec synth_preset(const std::string& name);  // "shift-mild" | "shift-strong"

struct SynthData {
  Dataset source;  // labeled
  Dataset target;  // labels are the held-out truth; strip before training
};

SynthData generate(const SynthSpec& spec);
/// One sample; geometry depends on (seed, geometry index) only.
DomainSample generate_sample(const SynthSpec& spec, Domain domain, int index);

struct DomainStats {
  int positives = 0;
  int negatives = 0;
  double mean_fg_intensity = 0.0;
  double mean_bg_intensity = 0.0;
  std::array<int, 10> fg_fraction_hist{};  // fraction of foreground pixels, 10 bins over [0, 0.5]
};

DomainStats domain_stats(const Dataset& ds);

/// 1-Wasserstein distance between pooled intensity histograms of two sets.
double histogram_distance(const Dataset& a, const Dataset& b, int bins = 256);

}  // namespace dasc
