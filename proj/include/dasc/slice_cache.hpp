#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dasc/datapipe.hpp"

namespace dasc {

// On-disk layout:
//   <dir>/index.json                 ordered sample ids per domain
//   <dir>/<domain>/<id>.png          16-bit image, value k encodes k/65535
//   <dir>/<domain>/<id>.json         sidecar (id, domain, class tag, HU window, content hash)
//   <dir>/source/<id>_mask.png       8-bit label (0/255)
//   <dir>/heldout/<id>_mask.png      target labels, read only by evaluation

struct CacheWriteOptions {
  double hu_lo = kWindowLoHU;
  double hu_hi = kWindowHiHU;
};

/// Writes both domains. Files whose sidecar already carries the same content
/// hash are left untouched; returns the number of files written.
std::size_t write_slice_cache(const std::filesystem::path& dir, const Dataset& source, const Dataset& target,
                              const CacheWriteOptions& opts = {});

struct SliceCache {
  Dataset source;
  UnlabeledDataset target;
  std::map<std::string, BinaryMask> heldout;
};

SliceCache read_slice_cache(const std::filesystem::path& dir);

/// Target samples joined with their held-out labels, for evaluation only.
Dataset attach_heldout(const UnlabeledDataset& target, const std::map<std::string, BinaryMask>& heldout);

/// Nearest 16-bit code of an intensity in [0,1]; anything outside throws.
/// Synthetic data is generated on this grid so it round-trips exactly.
std::uint16_t quantize16(double v);
double quantize_value16(double v);

}  // namespace dasc
