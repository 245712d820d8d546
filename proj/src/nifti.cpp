#include "dasc/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>

#include "dasc/error.hpp"

namespace dasc {
namespace {

constexpr int kHeaderSize = 348;

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzPtr = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

template <typename T>
T load(const std::uint8_t* p, bool swap) {
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
void store(std::uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

void read_exact(gzFile f, void* buf, std::size_t n, const std::filesystem::path& path) {
  std::size_t done = 0;
  auto* out = static_cast<std::uint8_t*>(buf);
  while (done < n) {
    const int got = gzread(f, out + done, static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30)));
    if (got <= 0) throw DataError(path.string() + ": truncated NIfTI file");
    done += static_cast<std::size_t>(got);
  }
}

}  // namespace

std::vector<double> Volume::axial(int z) const {
  if (z < 0 || z >= nz) throw DataError("axial slice index out of range");
  const std::size_t p = std::size_t(nx) * ny;
  return {data.begin() + z * p, data.begin() + (z + 1) * p};
}

Volume read_nifti(const std::filesystem::path& path) {
  GzPtr f(gzopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open volume " + path.string());
  std::array<std::uint8_t, kHeaderSize> h{};
  read_exact(f.get(), h.data(), h.size(), path);

  bool swap = false;
  if (load<std::int32_t>(h.data(), false) != kHeaderSize) {
    if (load<std::int32_t>(h.data(), true) != kHeaderSize) throw DataError(path.string() + ": not a NIfTI-1 file");
    swap = true;
  }
  const int ndim = load<std::int16_t>(h.data() + 40, swap);
  if (ndim < 2 || ndim > 7) throw DataError(path.string() + ": unsupported dimensionality");
  Volume v;
  v.nx = load<std::int16_t>(h.data() + 42, swap);
  v.ny = load<std::int16_t>(h.data() + 44, swap);
  v.nz = ndim >= 3 ? load<std::int16_t>(h.data() + 46, swap) : 1;
  for (int d = 4; d <= ndim; ++d) {
    if (load<std::int16_t>(h.data() + 40 + 2 * d, swap) > 1) throw DataError(path.string() + ": expected a scalar 3-D volume");
  }
  if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0) throw DataError(path.string() + ": bad dimensions");
  const int datatype = load<std::int16_t>(h.data() + 70, swap);
  const float vox_offset = load<float>(h.data() + 108, swap);
  const float slope = load<float>(h.data() + 112, swap);
  const float inter = load<float>(h.data() + 116, swap);

  std::size_t skip = static_cast<std::size_t>(vox_offset) - kHeaderSize;
  if (vox_offset < kHeaderSize) skip = 0;
  std::vector<std::uint8_t> pad(skip);
  if (skip) read_exact(f.get(), pad.data(), skip, path);

  const std::size_t n = std::size_t(v.nx) * v.ny * v.nz;
  int bytes = 0;
  switch (datatype) {
    case 2: bytes = 1; break;     // uint8
    case 4: bytes = 2; break;     // int16
    case 8: bytes = 4; break;     // int32
    case 16: bytes = 4; break;    // float32
    case 64: bytes = 8; break;    // float64
    case 256: bytes = 1; break;   // int8
    case 512: bytes = 2; break;   // uint16
    default: throw DataError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  std::vector<std::uint8_t> raw(n * bytes);
  read_exact(f.get(), raw.data(), raw.size(), path);
  v.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = raw.data() + i * bytes;
    double x = 0;
    switch (datatype) {
      case 2: x = p[0]; break;
      case 4: x = load<std::int16_t>(p, swap); break;
      case 8: x = load<std::int32_t>(p, swap); break;
      case 16: x = load<float>(p, swap); break;
      case 64: x = load<double>(p, swap); break;
      case 256: x = static_cast<std::int8_t>(p[0]); break;
      case 512: x = load<std::uint16_t>(p, swap); break;
    }
    v.data[i] = slope != 0.0f ? x * slope + inter : x;
  }
  return v;
}

void write_nifti(const std::filesystem::path& path, const Volume& vol) {
  if (vol.data.size() != std::size_t(vol.nx) * vol.ny * vol.nz) throw ShapeError("write_nifti: size mismatch");
  std::array<std::uint8_t, kHeaderSize + 4> h{};
  store<std::int32_t>(h.data(), kHeaderSize);
  store<std::int16_t>(h.data() + 40, 3);
  store<std::int16_t>(h.data() + 42, static_cast<std::int16_t>(vol.nx));
  store<std::int16_t>(h.data() + 44, static_cast<std::int16_t>(vol.ny));
  store<std::int16_t>(h.data() + 46, static_cast<std::int16_t>(vol.nz));
  for (int d = 4; d <= 7; ++d) store<std::int16_t>(h.data() + 40 + 2 * d, 1);
  store<std::int16_t>(h.data() + 70, 16);
  store<std::int16_t>(h.data() + 72, 32);
  for (int d = 0; d < 4; ++d) store<float>(h.data() + 76 + 4 * d, 1.0f);  // pixdim
  store<float>(h.data() + 108, 352.0f);
  store<float>(h.data() + 112, 0.0f);
  std::memcpy(h.data() + 344, "n+1", 4);

  const bool gz = path.extension() == ".gz";
  GzPtr f(gzopen(path.c_str(), gz ? "wb6" : "wb0T"));
  if (!f) throw DataError("cannot write volume " + path.string());
  std::vector<float> body(vol.data.begin(), vol.data.end());
  if (gzwrite(f.get(), h.data(), h.size()) != static_cast<int>(h.size()) ||
      gzwrite(f.get(), body.data(), static_cast<unsigned>(body.size() * sizeof(float))) !=
          static_cast<int>(body.size() * sizeof(float))) {
    throw DataError("failed writing volume " + path.string());
  }
}

}  // namespace dasc
