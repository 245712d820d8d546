#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dasc/image.hpp"
#include "dasc/rng.hpp"

namespace dasc {

enum class Domain { kSource, kTarget };
enum class ClassTag { kPositive, kNegative };

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& s);
std::string class_tag_name(ClassTag t);
ClassTag class_tag_from_name(const std::string& s);

struct DomainSample {
  Slice image;
  std::optional<BinaryMask> label;
  Domain domain = Domain::kSource;
  std::string sample_id;
  std::optional<ClassTag> class_tag;
};
using Dataset = std::vector<DomainSample>;

/// A sample with no label slot at all. Target data handed to training takes
/// this form, so ground truth cannot leak in by accident.
struct UnlabeledSample {
  Slice image;
  Domain domain = Domain::kTarget;
  std::string sample_id;
  std::optional<ClassTag> class_tag;
};
using UnlabeledDataset = std::vector<UnlabeledSample>;

UnlabeledDataset strip_labels(const Dataset& ds);
/// Samples whose label is present and nonempty.
Dataset positive_only(const Dataset& ds);

inline constexpr double kWindowLoHU = -1250.0;
inline constexpr double kWindowHiHU = 250.0;

/// (clip(x, lo, hi) - lo) / (hi - lo). Non-finite input is rejected with the sample id.
std::vector<double> window_normalize(std::span<const double> hu, const std::string& sample_id,
                                     double lo = kWindowLoHU, double hi = kWindowHiHU);

struct BoundingBox {
  int row0 = 0, col0 = 0;  // inclusive
  int rows = 0, cols = 0;
};

/// Tight box around the nonzero region, grown by `margin` and clipped to the image.
BoundingBox lung_bbox(const BinaryMask& lung, int margin, const std::string& slice_id);
Slice crop(const Slice& s, const BoundingBox& box);
BinaryMask crop(const BinaryMask& m, const BoundingBox& box);
Slice crop_to_lung(const Slice& s, const BinaryMask& lung, const std::string& slice_id, int margin = 0);

/// Rough lung mask from HU when no segmentation is supplied: air-range pixels
/// not connected to the border, keeping the `keep` largest 4-connected parts.
BinaryMask lung_mask_fallback(std::span<const double> hu, int height, int width, double air_hi = -320.0,
                              double air_lo = -1000.0, int keep = 2);

/// kDirect stretches to the target; kPad zero-pads to the target aspect first.
enum class ResizeMode { kDirect, kPad };

Slice resize(const Slice& s, int height, int width, ResizeMode mode = ResizeMode::kDirect);
BinaryMask resize(const BinaryMask& m, int height, int width, ResizeMode mode = ResizeMode::kDirect);

struct AugmentParams {
  bool flip_h = false;
  bool flip_v = false;
  double translate_x = 0.0;  // fraction of width
  double translate_y = 0.0;  // fraction of height
  double scale = 1.0;
  double shear_deg = 0.0;
  double rotate_deg = 0.0;

  static constexpr double kMaxTranslate = 0.01;
  static constexpr double kMinScale = 0.8;
  static constexpr double kMaxScale = 1.2;
  static constexpr double kMaxShear = 10.0;
  static constexpr double kMaxRotate = 90.0;

  void validate() const;
  bool is_pure_flip() const;
  /// Uniform draw over the full allowed ranges.
  static AugmentParams draw(Rng& rng);
};

/// Same spatial map for image (bilinear) and label (nearest). Pixels mapped
/// from outside the frame become 0.
DomainSample augment(const DomainSample& sample, const AugmentParams& params);
Slice warp(const Slice& s, const AugmentParams& params);
BinaryMask warp(const BinaryMask& m, const AugmentParams& params);

/// Horizontal / vertical mirror of a row-major plane.
std::vector<double> flip_plane(std::span<const double> plane, int height, int width, bool horizontal, bool vertical);

/// Index batches for one epoch. The order is a pure function of (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(std::size_t dataset_size, int batch_size,
                                                   std::uint64_t shuffle_seed, std::uint64_t epoch,
                                                   bool shuffle = true);

}  // namespace dasc
