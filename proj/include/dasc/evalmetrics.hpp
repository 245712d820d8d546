#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dasc/datapipe.hpp"
#include "dasc/tensor.hpp"

namespace dasc {

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& truth);

// Empty-set conventions: dice and ja are 1 when both masks are empty; sen is 1
// with no positive truth pixels; spc is 1 with no negative truth pixels.
double dice(const Confusion& c);
double sen(const Confusion& c);
double spc(const Confusion& c);
double jaccard(const Confusion& c);

/// Exact symmetric Hausdorff distance between foreground pixel centres. Both
/// empty gives 0; exactly one empty gives the image diagonal.
double hausdorff(const BinaryMask& pred, const BinaryMask& truth);

/// Squared Euclidean distance from every pixel to the nearest foreground pixel
/// (+inf everywhere when the mask is empty).
std::vector<double> squared_distance_transform(const BinaryMask& m);

struct SampleMetrics {
  std::string sample_id;
  double dice = 0, sen = 0, spc = 0, ja = 0, hd = 0;
};

SampleMetrics sample_metrics(const std::string& id, const BinaryMask& pred, const BinaryMask& truth);

struct MetricsReport {
  std::vector<SampleMetrics> samples;
  SampleMetrics mean;
  std::string model_id;
  std::string config_hash;

  std::string to_json() const;
  std::string to_csv() const;
  /// report.json and per_sample.csv under `dir`.
  void write(const std::filesystem::path& dir) const;
};

MetricsReport aggregate(std::vector<SampleMetrics> samples, std::string model_id, std::string config_hash);

/// Foreground probability (N,1,H,W) for an (N,1,H,W) image batch.
using Predictor = std::function<Tensor(const Tensor& images)>;

struct EvalOptions {
  /// Skip slices whose truth is empty (Dice and HD are degenerate there).
  bool positive_only = true;
  int batch_size = 8;
  std::string model_id = "model";
  std::string config_hash;
};

/// Predicts with `predictor`, labels a pixel foreground when its probability is
/// above 0.5 (the two-class argmax; ties go to background) and scores it.
MetricsReport evaluate(const Predictor& predictor, const Dataset& with_truth, const EvalOptions& opts);
std::vector<BinaryMask> predict_masks(const Predictor& predictor, const Dataset& ds, int batch_size);

/// RGB overlay: correct foreground green, false positives and negatives red.
void write_overlay(const std::filesystem::path& path, const Slice& image, const BinaryMask& pred,
                   const BinaryMask& truth);

}  // namespace dasc
