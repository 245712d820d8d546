#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dasc/adaptation.hpp"
#include "dasc/selfcorrect.hpp"
#include "dasc/synthbench.hpp"

namespace dasc {

struct DataSection {
  std::filesystem::path cache_dir = "cache";
  std::vector<std::filesystem::path> source_images, source_labels, source_lungs;
  std::vector<std::filesystem::path> target_images, target_labels, target_lungs;
  bool lung_fallback = false;
  int crop_margin = 0;
  ResizeMode resize_mode = ResizeMode::kDirect;
  double hu_lo = kWindowLoHU;
  double hu_hi = kWindowHiHU;
};

struct SynthSection {
  std::string preset = "shift-strong";
  SynthSpec spec = shift_strong();
};

struct EvalSection {
  bool positive_only = true;
  int batch_size = 8;
  int overlays = 4;
  /// Extra named checkpoints for the comparison table, "name=path".
  std::vector<std::string> compare;
};

/// Whole-run configuration, read from a key-value INI file. Unknown keys are
/// rejected. Environment variables may override paths only.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  DataSection data;
  SynthSection synth;
  TrainingConfig train;
  SelfCorrectionConfig selfcorrect;
  EvalSection eval;
  int checkpoint_every = 0;

  static RunConfig defaults();
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& ini_text);

  /// Applies a global seed to every component.
  void set_seed(std::uint64_t s);
  void set_preset(ArchPreset p);
  void validate() const;

  /// Fully resolved configuration in INI form; its SHA-256 is the config hash.
  std::string to_ini() const;
  std::string hash() const;
};

}  // namespace dasc
