#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dasc/datapipe.hpp"
#include "dasc/evalmetrics.hpp"
#include "dasc/losses.hpp"
#include "dasc/networks.hpp"
#include "dasc/optim.hpp"

namespace dasc {

struct TrainingConfig {
  LossWeights loss;
  double lr_generator = 2.5e-4;
  double lr_discriminators = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 4;
  int epochs_da = 100;
  int epochs_cam = 1;
  double lr_power = 0.9;
  std::uint64_t seed = 0;
  ArchPreset arch_preset = ArchPreset::kSmall;
  int height = 64;
  int width = 64;
  /// Base ablation: no attentive major branch, no feature alignment.
  bool base_da_mode = false;
  /// Individual ablation switches (ignored when base_da_mode is set).
  bool cam_branch = true;
  bool feature_alignment = true;
  bool cam_attention_on_target = true;
  bool augment = true;
  /// Segmentation batches use only source slices with nonempty labels.
  bool positive_source_only = true;

  void validate() const;
  ArchConfig arch() const;
  bool uses_major_branch() const { return !base_da_mode && cam_branch; }
  bool uses_feature_alignment() const { return !base_da_mode && feature_alignment; }
  /// Target batches matter only through the adversarial terms.
  bool needs_target() const;
};

enum class PredictionHead { kMajor, kAuxMean };
std::string head_name(PredictionHead h);
PredictionHead head_from_name(const std::string& s);

/// Foreground probability in inference mode. kMajor uses P0 (with CAM
/// attention when `cam_attention`), kAuxMean averages the two auxiliary heads.
Predictor make_predictor(const DascModel& model, PredictionHead head, bool cam_attention = true);

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0;
  double seg = 0, weight = 0, adv_seg = 0, adv_fea = 0, da = 0;
  double d_mask = 0, d_feature = 0;
};

std::string loss_csv_header();
std::string loss_csv_row(const LossRecord& r);

struct TrainState {
  std::int64_t iteration = 0;
  int epoch = 0;
  double lr_generator = 0;
  double lr_discriminators = 0;
  LossRecord last;
};

// A training example after loading: image plus a hard or soft foreground target.
struct TrainSample {
  Slice image;
  std::optional<BinaryMask> hard;
  std::optional<Slice> soft;
  std::string sample_id;
};

struct Batch {
  Tensor images;   // (N,1,H,W)
  Tensor targets;  // (N,1,H,W) foreground probability, empty when unlabeled
};

/// Stacks samples, applying per-sample augmentation drawn from
/// (seed, stream_tag, epoch, index) when `augment` is set.
Batch load_batch(const std::vector<TrainSample>& pool, const std::vector<std::size_t>& indices, bool augment,
                 std::uint64_t seed, std::uint64_t stream_tag, std::uint64_t epoch);

std::vector<TrainSample> to_train_samples(const Dataset& ds);
std::vector<TrainSample> to_train_samples(const UnlabeledDataset& ds);

/// Trains the CAM extractor on image-level tags (cross-entropy) and returns its
/// parameters (role cam_extractor only). Zero epochs returns the initialization.
ParameterVector train_cam_extractor(const Dataset& source, const TrainingConfig& cfg);

/// Classification accuracy of a CAM extractor on tagged samples.
double cam_accuracy(const ParameterVector& cam_params, const Dataset& ds, const TrainingConfig& cfg);

struct DaRunOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 0;              // iterations; 0 = only at the end
  std::filesystem::path loss_csv;        // empty: no log file
  std::function<void(const LossRecord&)> on_step;
  /// Stop after this many iterations in total (tests); -1 runs to the end.
  std::int64_t stop_at = -1;
};

struct DaResult {
  ParameterVector generator;  // encoder, decoders, CAM extractor
  std::vector<LossRecord> history;
  TrainState state;
};

class AfdDaTrainer {
 public:
  AfdDaTrainer(const Dataset& source, const UnlabeledDataset& target, const ParameterVector& cam_params,
               const TrainingConfig& cfg);

  /// One generator update followed by one discriminator update.
  LossRecord step();
  bool done() const { return state_.iteration >= total_iterations_; }
  std::int64_t total_iterations() const { return total_iterations_; }
  std::int64_t iterations_per_epoch() const { return iters_per_epoch_; }
  const TrainState& state() const { return state_; }

  const DascModel& model() const { return *model_; }
  const Discriminators& discriminators() const { return *discs_; }

  /// Full training state: parameters, optimizer moments and counters.
  void save(const std::filesystem::path& dir) const;
  void resume(const std::filesystem::path& dir);

  DaResult run(const DaRunOptions& opts = {});

  enum class Phase { kGeneratorUpdated, kDiscriminatorsUpdated };
  /// Observer called inside step() after each half of the alternation.
  void set_phase_hook(std::function<void(Phase)> hook) { phase_hook_ = std::move(hook); }

 private:
  TrainingConfig cfg_;
  std::vector<TrainSample> source_, target_;
  std::unique_ptr<DascModel> model_;
  std::unique_ptr<Discriminators> discs_;
  std::unique_ptr<Adam> opt_g_, opt_dm_, opt_df_;
  std::int64_t iters_per_epoch_ = 0;
  std::int64_t total_iterations_ = 0;
  TrainState state_;
  std::vector<LossRecord> history_;
  std::function<void(Phase)> phase_hook_;
};

DaResult train_afd_da(const Dataset& source, const UnlabeledDataset& target, const ParameterVector& cam_params,
                      const TrainingConfig& cfg, const DaRunOptions& opts = {});

/// Supervised training of the attentive segmentation net with the three-head seg loss only;
/// poly schedule over `epochs` passes of `samples`. The model is updated in place.
std::vector<LossRecord> train_segmentation(const DascModel& model, const std::vector<TrainSample>& samples, int epochs,
                                           const TrainingConfig& cfg, std::uint64_t run_tag);

/// Batch-and-epoch cursor shared by the trainers: which samples form batch j
/// of an epoch when the epoch spans `iters` batches over `n` samples.
std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::int64_t iters, std::uint64_t seed,
                                       std::uint64_t stream_tag, int epoch, std::int64_t j);

}  // namespace dasc
