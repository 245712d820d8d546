#pragma once

// Volume ingestion: NIfTI scans to windowed, lung-cropped, resized 2-D slices.

#include <filesystem>
#include <vector>

#include "dasc/datapipe.hpp"

namespace dasc {

struct IngestOptions {
  int height = 64;
  int width = 64;
  bool lung_fallback = false;  // HU thresholding when no lung mask is given
  int crop_margin = 0;
  ResizeMode resize_mode = ResizeMode::kDirect;
  double hu_lo = kWindowLoHU;
  double hu_hi = kWindowHiHU;
};

struct ScanFiles {
  std::filesystem::path image;
  std::filesystem::path label;  // empty: unlabeled
  std::filesystem::path lung;   // empty: fallback or error
};

/// "scan.nii.gz" -> "scan".
std::string scan_name(const std::filesystem::path& p);

/// One sample per axial slice that has lung in it; ids are "<scan>_z<k>".
Dataset ingest_scan(const ScanFiles& files, Domain domain, const IngestOptions& opts);

/// Pairs images with labels/lungs by position. `labels` and `lungs` may be
/// empty lists; otherwise they must match `images` in length.
Dataset ingest_scans(const std::vector<std::filesystem::path>& images,
                     const std::vector<std::filesystem::path>& labels,
                     const std::vector<std::filesystem::path>& lungs, Domain domain, const IngestOptions& opts);

}  // namespace dasc
