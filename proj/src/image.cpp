#include "dasc/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "dasc/error.hpp"

namespace dasc {

void Slice::validate(const std::string& what) const {
  if (height <= 0 || width <= 0) throw DataError(what + ": empty slice");
  if (pixels.size() != std::size_t(height) * width) throw DataError(what + ": pixel count does not match shape");
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError(what + ": intensity outside [0,1]");
  }
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto v : pixels) n += v;
  return n;
}

void BinaryMask::validate(const std::string& what) const {
  if (height <= 0 || width <= 0) throw DataError(what + ": empty mask");
  if (pixels.size() != std::size_t(height) * width) throw DataError(what + ": pixel count does not match shape");
  for (auto v : pixels) {
    if (v > 1) throw DataError(what + ": mask is not binary");
  }
}

BinaryMask threshold_map(std::span<const double> values, int height, int width, double threshold) {
  if (values.size() != std::size_t(height) * width) throw ShapeError("threshold_map: size mismatch");
  BinaryMask m = BinaryMask::zeros(height, width);
  for (std::size_t i = 0; i < values.size(); ++i) m.pixels[i] = values[i] >= threshold ? 1 : 0;
  return m;
}

Tensor to_tensor(std::span<const Slice> slices) {
  if (slices.empty()) throw DataError("to_tensor: no slices");
  const int h = slices[0].height, w = slices[0].width;
  Tensor t({static_cast<int>(slices.size()), 1, h, w});
  std::size_t o = 0;
  for (const auto& s : slices) {
    if (s.height != h || s.width != w) throw ShapeError("to_tensor: slices differ in shape");
    for (double v : s.pixels) t[o++] = v;
  }
  return t;
}

Tensor to_tensor(std::span<const BinaryMask> masks) {
  if (masks.empty()) throw DataError("to_tensor: no masks");
  const int h = masks[0].height, w = masks[0].width;
  Tensor t({static_cast<int>(masks.size()), 1, h, w});
  std::size_t o = 0;
  for (const auto& m : masks) {
    if (m.height != h || m.width != w) throw ShapeError("to_tensor: masks differ in shape");
    for (auto v : m.pixels) t[o++] = v;
  }
  return t;
}

std::vector<double> plane_of(const Tensor& t, int n) {
  const std::size_t p = t.plane();
  const double* src = t.data() + static_cast<std::size_t>(n) * t.c() * p;
  return {src, src + p};
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void write_png(const std::filesystem::path& path, int height, int width, int depth, int color,
               const std::uint8_t* rows, std::size_t row_bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) png_write_row(png, const_cast<png_bytep>(rows + r * row_bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray16(const std::filesystem::path& path, int height, int width, std::span<const std::uint16_t> px) {
  if (px.size() != std::size_t(height) * width) throw ShapeError("write_png_gray16: size mismatch");
  // PNG stores 16-bit samples big-endian.
  std::vector<std::uint8_t> buf(px.size() * 2);
  for (std::size_t i = 0; i < px.size(); ++i) {
    buf[2 * i] = static_cast<std::uint8_t>(px[i] >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(px[i] & 0xff);
  }
  write_png(path, height, width, 16, PNG_COLOR_TYPE_GRAY, buf.data(), std::size_t(width) * 2);
}

void write_png_gray8(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> px) {
  if (px.size() != std::size_t(height) * width) throw ShapeError("write_png_gray8: size mismatch");
  write_png(path, height, width, 8, PNG_COLOR_TYPE_GRAY, px.data(), std::size_t(width));
}

void write_png_rgb8(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != std::size_t(height) * width * 3) throw ShapeError("write_png_rgb8: size mismatch");
  write_png(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb.data(), std::size_t(width) * 3);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  GrayImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (img.bit_depth != 8 && img.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": expected 8- or 16-bit grayscale PNG");
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> row(row_bytes);
  img.values.resize(std::size_t(img.height) * img.width);
  for (int r = 0; r < img.height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < img.width; ++c) {
      img.values[std::size_t(r) * img.width + c] =
          img.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]) : row[c];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace dasc
