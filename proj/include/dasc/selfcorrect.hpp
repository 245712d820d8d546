#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dasc/adaptation.hpp"

namespace dasc {

struct SelfCorrectionConfig {
  int cycles = 9;            // C
  int epochs_per_cycle = 2;  // Ep
  bool tta_flip_h = true;
  bool tta_flip_v = true;
  double pseudo_threshold = 0.5;
  /// Train on the soft aggregated maps instead of thresholded masks.
  bool soft_targets = false;
  bool positive_source_only = true;

  void validate() const;
};

/// Soft foreground maps for every target sample at one cycle.
struct PseudoLabelSet {
  int cycle = 0;
  int height = 0;
  int width = 0;
  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> maps;
  std::string provenance;

  void validate() const;
  friend bool operator==(const PseudoLabelSet& a, const PseudoLabelSet& b) {
    return a.height == b.height && a.width == b.width && a.sample_ids == b.sample_ids && a.maps == b.maps;
  }
};

/// Identity view plus each requested flip, flipped predictions flipped back,
/// foreground probabilities averaged.
PseudoLabelSet generate_pseudo_labels(const Predictor& predictor, const UnlabeledDataset& target, bool flip_h,
                                      bool flip_v, int batch_size = 8);

/// c/(c+1) * prev + 1/(c+1) * init, evaluated as prev + (init - prev)/(c+1)
/// and clamped to the closed interval of its two inputs.
double convex_update(double prev, double init, int c);

ParameterVector aggregate_weights(const ParameterVector& w_prev, const ParameterVector& w0, int c);
PseudoLabelSet aggregate_labels(const PseudoLabelSet& y_prev, const PseudoLabelSet& y0, int c);

/// Source samples with their labels plus target samples whose label is the
/// pseudo map thresholded with >=.
Dataset build_mixed_dataset(const Dataset& source, const UnlabeledDataset& target, const PseudoLabelSet& pseudo,
                            double threshold);

struct CycleRecord {
  int cycle = 0;
  std::vector<LossRecord> losses;
  double label_change = 0.0;  // max |Y_c - Y_{c-1}|
};

struct SelfCorrectionResult {
  ParameterVector weights;
  PseudoLabelSet labels;
  PseudoLabelSet initial_labels;
  std::vector<CycleRecord> history;
};

struct SelfCorrectionRunOptions {
  std::filesystem::path checkpoint_dir;  // cycle_<c>/ per cycle when set
  std::string config_hash;
  /// Called after each cycle with the aggregated model loaded.
  std::function<void(int cycle, const DascModel& model, const PseudoLabelSet& labels)> on_cycle;
};

/// Dual-domain self-correction. Training uses `train_cfg` for the optimizer,
/// batch size, resolution, augmentation and seed.
SelfCorrectionResult run_self_correction(const ParameterVector& w0, const Dataset& source,
                                         const UnlabeledDataset& target, const SelfCorrectionConfig& cfg,
                                         const TrainingConfig& train_cfg, const SelfCorrectionRunOptions& opts = {});

/// 8-bit PNG per map (value round(255 p)) plus an exact HDF5 copy.
void write_pseudo_archive(const std::filesystem::path& dir, const PseudoLabelSet& labels);
PseudoLabelSet read_pseudo_archive(const std::filesystem::path& dir);

}  // namespace dasc
