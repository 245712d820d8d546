#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dasc/tensor.hpp"

namespace dasc {

/// Grayscale image with intensities in [0,1], row-major.
struct Slice {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  static Slice zeros(int height, int width) { return {height, width, std::vector<double>(std::size_t(height) * width)}; }
  double at(int r, int c) const { return pixels[std::size_t(r) * width + c]; }
  double& at(int r, int c) { return pixels[std::size_t(r) * width + c]; }
  /// Throws DataError if the shape is degenerate or a value leaves [0,1].
  void validate(const std::string& what) const;

  friend bool operator==(const Slice&, const Slice&) = default;
};

/// Binary label, values exactly 0 or 1.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  static BinaryMask zeros(int height, int width) {
    return {height, width, std::vector<std::uint8_t>(std::size_t(height) * width)};
  }
  std::uint8_t at(int r, int c) const { return pixels[std::size_t(r) * width + c]; }
  std::uint8_t& at(int r, int c) { return pixels[std::size_t(r) * width + c]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  void validate(const std::string& what) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Threshold a probability map: value >= threshold becomes foreground.
BinaryMask threshold_map(std::span<const double> values, int height, int width, double threshold);

/// Stacks slices into an (N,1,H,W) tensor.
Tensor to_tensor(std::span<const Slice> slices);
Tensor to_tensor(std::span<const BinaryMask> masks);
/// Plane `n` of an (N,1,H,W) tensor.
std::vector<double> plane_of(const Tensor& t, int n);

// PNG helpers. Grayscale readers return raw sample values.
void write_png_gray16(const std::filesystem::path& path, int height, int width, std::span<const std::uint16_t> px);
void write_png_gray8(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> px);
void write_png_rgb8(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> rgb);

struct GrayImage {
  int height = 0;
  int width = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> values;
};
GrayImage read_png_gray(const std::filesystem::path& path);

}  // namespace dasc
