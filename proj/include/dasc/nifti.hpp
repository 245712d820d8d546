#pragma once

#include <filesystem>
#include <vector>

namespace dasc {

/// Scalar 3-D volume, x fastest then y then z (NIfTI storage order).
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> data;

  /// Axial slice z as a row-major (ny rows, nx cols) plane.
  std::vector<double> axial(int z) const;
};

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz). Scaling by
/// scl_slope/scl_inter is applied when the slope is nonzero.
Volume read_nifti(const std::filesystem::path& path);

/// Writes float32 NIfTI-1; gzip-compressed when the name ends in ".gz".
void write_nifti(const std::filesystem::path& path, const Volume& vol);

}  // namespace dasc
