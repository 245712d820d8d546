#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dasc/networks.hpp"
#include "dasc/params.hpp"

namespace dasc {

struct NamedArray {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Portable named-array container (HDF5, one float64 dataset per array, order kept).
void write_named_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_named_arrays(const std::filesystem::path& path);

struct CheckpointManifest {
  std::string stage;  // "cam", "afd-da", "self-correct", ...
  ArchPreset preset = ArchPreset::kSmall;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  int cycle = 0;
  std::string config_hash;
  std::string head = "major";  // prediction head: "major" or "aux_mean"
  std::vector<std::string> roles;
};

/// <dir>/<role>.h5 for every role present in `params`, plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ParameterVector& params, CheckpointManifest manifest);
ParameterVector load_checkpoint(const std::filesystem::path& dir, CheckpointManifest* manifest = nullptr);
CheckpointManifest read_manifest(const std::filesystem::path& dir);

}  // namespace dasc
