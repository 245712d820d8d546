#include "dasc/datapipe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dasc/error.hpp"

namespace dasc {

std::string domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain domain_from_name(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw DataError("unknown domain '" + s + "'");
}

std::string class_tag_name(ClassTag t) { return t == ClassTag::kPositive ? "positive" : "negative"; }

ClassTag class_tag_from_name(const std::string& s) {
  if (s == "positive") return ClassTag::kPositive;
  if (s == "negative") return ClassTag::kNegative;
  throw DataError("unknown class tag '" + s + "'");
}

UnlabeledDataset strip_labels(const Dataset& ds) {
  UnlabeledDataset out;
  out.reserve(ds.size());
  for (const auto& s : ds) out.push_back({s.image, s.domain, s.sample_id, s.class_tag});
  return out;
}

Dataset positive_only(const Dataset& ds) {
  Dataset out;
  for (const auto& s : ds) {
    if (s.label && !s.label->empty()) out.push_back(s);
  }
  return out;
}

std::vector<double> window_normalize(std::span<const double> hu, const std::string& sample_id, double lo,
                                     double hi) {
  if (!(hi > lo)) throw ConfigError("window_normalize: hi must exceed lo");
  std::vector<double> out(hu.size());
  const double range = hi - lo;
  for (std::size_t i = 0; i < hu.size(); ++i) {
    if (!std::isfinite(hu[i])) {
      throw DataError("sample " + sample_id + ": non-finite intensity at index " + std::to_string(i));
    }
    out[i] = (std::clamp(hu[i], lo, hi) - lo) / range;
  }
  return out;
}

BoundingBox lung_bbox(const BinaryMask& lung, int margin, const std::string& slice_id) {
  int r0 = lung.height, r1 = -1, c0 = lung.width, c1 = -1;
  for (int r = 0; r < lung.height; ++r) {
    for (int c = 0; c < lung.width; ++c) {
      if (!lung.at(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) throw DataError("slice " + slice_id + ": lung mask is empty, cannot crop");
  if (margin < 0) throw ConfigError("crop margin must be non-negative");
  r0 = std::max(0, r0 - margin);
  c0 = std::max(0, c0 - margin);
  r1 = std::min(lung.height - 1, r1 + margin);
  c1 = std::min(lung.width - 1, c1 + margin);
  return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

namespace {

template <typename T>
std::vector<T> crop_plane(const std::vector<T>& px, int width, const BoundingBox& b) {
  std::vector<T> out(std::size_t(b.rows) * b.cols);
  for (int r = 0; r < b.rows; ++r) {
    const auto* src = px.data() + std::size_t(b.row0 + r) * width + b.col0;
    std::copy(src, src + b.cols, out.begin() + std::size_t(r) * b.cols);
  }
  return out;
}

}  // namespace

Slice crop(const Slice& s, const BoundingBox& box) { return {box.rows, box.cols, crop_plane(s.pixels, s.width, box)}; }

BinaryMask crop(const BinaryMask& m, const BoundingBox& box) {
  return {box.rows, box.cols, crop_plane(m.pixels, m.width, box)};
}

Slice crop_to_lung(const Slice& s, const BinaryMask& lung, const std::string& slice_id, int margin) {
  if (lung.height != s.height || lung.width != s.width) {
    throw DataError("slice " + slice_id + ": lung mask shape differs from the slice");
  }
  return crop(s, lung_bbox(lung, margin, slice_id));
}

BinaryMask lung_mask_fallback(std::span<const double> hu, int height, int width, double air_hi, double air_lo,
                              int keep) {
  const std::size_t n = std::size_t(height) * width;
  if (hu.size() != n) throw ShapeError("lung_mask_fallback: size mismatch");
  std::vector<int> label(n, 0);  // 0 unvisited air, -1 not air, -2 outside air, >0 component
  for (std::size_t i = 0; i < n; ++i) label[i] = (hu[i] >= air_lo && hu[i] <= air_hi) ? 0 : -1;

  std::vector<std::size_t> stack;
  auto flood = [&](std::size_t seed, int id) {
    std::size_t size = 0;
    stack.assign(1, seed);
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(p / width), c = static_cast<int>(p % width);
      const std::array<std::pair<int, int>, 4> nb{{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
      for (auto [rr, cc] : nb) {
        if (rr < 0 || cc < 0 || rr >= height || cc >= width) continue;
        const std::size_t q = std::size_t(rr) * width + cc;
        if (label[q] == 0) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
    return size;
  };

  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (r != 0 && c != 0 && r != height - 1 && c != width - 1) continue;
      const std::size_t p = std::size_t(r) * width + c;
      if (label[p] == 0) flood(p, -2);
    }
  }
  std::vector<std::pair<std::size_t, int>> comps;
  int next = 1;
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] == 0) {
      comps.emplace_back(flood(p, next), next);
      ++next;
    }
  }
  std::stable_sort(comps.begin(), comps.end(), [](auto a, auto b) { return a.first > b.first; });
  std::vector<bool> kept(static_cast<std::size_t>(next), false);
  for (int k = 0; k < keep && k < static_cast<int>(comps.size()); ++k) kept[comps[k].second] = true;
  BinaryMask m = BinaryMask::zeros(height, width);
  for (std::size_t p = 0; p < n; ++p) m.pixels[p] = label[p] > 0 && kept[label[p]] ? 1 : 0;
  return m;
}

namespace {

// Padded extent with the target aspect ratio, original content centered.
std::pair<int, int> padded_extent(int h, int w, int th, int tw) {
  if (std::int64_t(h) * tw > std::int64_t(w) * th) {
    return {h, static_cast<int>((std::int64_t(h) * tw + th - 1) / th)};
  }
  return {static_cast<int>((std::int64_t(w) * th + tw - 1) / tw), w};
}

template <typename T>
std::vector<T> pad_center(const std::vector<T>& px, int h, int w, int ph, int pw) {
  std::vector<T> out(std::size_t(ph) * pw, T{0});
  const int top = (ph - h) / 2, left = (pw - w) / 2;
  for (int r = 0; r < h; ++r) {
    std::copy(px.begin() + std::size_t(r) * w, px.begin() + std::size_t(r + 1) * w,
              out.begin() + std::size_t(r + top) * pw + left);
  }
  return out;
}

struct Tap {
  int i0, i1;
  double f;
};

std::vector<Tap> half_pixel_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    taps[o] = {i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return taps;
}

double lerp(double a, double b, double f) { return a + f * (b - a); }

}  // namespace

Slice resize(const Slice& s, int height, int width, ResizeMode mode) {
  if (height <= 0 || width <= 0) throw ConfigError("resize: target dims must be positive");
  if (mode == ResizeMode::kPad) {
    auto [ph, pw] = padded_extent(s.height, s.width, height, width);
    if (ph != s.height || pw != s.width) {
      return resize(Slice{ph, pw, pad_center(s.pixels, s.height, s.width, ph, pw)}, height, width);
    }
  }
  if (s.height == height && s.width == width) return s;
  const auto ty = half_pixel_taps(s.height, height), tx = half_pixel_taps(s.width, width);
  Slice out = Slice::zeros(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double top = lerp(s.at(ty[r].i0, tx[c].i0), s.at(ty[r].i0, tx[c].i1), tx[c].f);
      const double bot = lerp(s.at(ty[r].i1, tx[c].i0), s.at(ty[r].i1, tx[c].i1), tx[c].f);
      out.at(r, c) = std::clamp(lerp(top, bot, ty[r].f), 0.0, 1.0);
    }
  }
  return out;
}

BinaryMask resize(const BinaryMask& m, int height, int width, ResizeMode mode) {
  if (height <= 0 || width <= 0) throw ConfigError("resize: target dims must be positive");
  if (mode == ResizeMode::kPad) {
    auto [ph, pw] = padded_extent(m.height, m.width, height, width);
    if (ph != m.height || pw != m.width) {
      return resize(BinaryMask{ph, pw, pad_center(m.pixels, m.height, m.width, ph, pw)}, height, width);
    }
  }
  if (m.height == height && m.width == width) return m;
  BinaryMask out = BinaryMask::zeros(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(m.height - 1, static_cast<int>((r + 0.5) * m.height / height));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(m.width - 1, static_cast<int>((c + 0.5) * m.width / width));
      out.at(r, c) = m.at(sr, sc);
    }
  }
  return out;
}

void AugmentParams::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(translate_x, -kMaxTranslate, kMaxTranslate) || !in(translate_y, -kMaxTranslate, kMaxTranslate)) {
    throw ConfigError("augment: translation outside [-0.01, 0.01]");
  }
  if (!in(scale, kMinScale, kMaxScale)) throw ConfigError("augment: scale outside [0.8, 1.2]");
  if (!in(shear_deg, -kMaxShear, kMaxShear)) throw ConfigError("augment: shear outside [-10, 10] degrees");
  if (!in(rotate_deg, -kMaxRotate, kMaxRotate)) throw ConfigError("augment: rotation outside [-90, 90] degrees");
}

bool AugmentParams::is_pure_flip() const {
  return translate_x == 0.0 && translate_y == 0.0 && scale == 1.0 && shear_deg == 0.0 && rotate_deg == 0.0;
}

AugmentParams AugmentParams::draw(Rng& rng) {
  AugmentParams p;
  p.flip_h = uniform01(rng) < 0.5;
  p.flip_v = uniform01(rng) < 0.5;
  p.translate_x = uniform(rng, -kMaxTranslate, kMaxTranslate);
  p.translate_y = uniform(rng, -kMaxTranslate, kMaxTranslate);
  p.scale = uniform(rng, kMinScale, kMaxScale);
  p.shear_deg = uniform(rng, -kMaxShear, kMaxShear);
  p.rotate_deg = uniform(rng, -kMaxRotate, kMaxRotate);
  return p;
}

namespace {

// Maps an output pixel back to its source location.
struct InverseMap {
  double a, b, c, d;  // 2x2 inverse of the forward linear part
  double cx, cy, tx, ty;

  InverseMap(const AugmentParams& p, int height, int width) {
    constexpr double kDeg = std::numbers::pi / 180.0;
    const double fx = p.flip_h ? -1.0 : 1.0, fy = p.flip_v ? -1.0 : 1.0;
    const double cr = std::cos(p.rotate_deg * kDeg), sr = std::sin(p.rotate_deg * kDeg);
    const double k = std::tan(p.shear_deg * kDeg);
    // forward = Flip * Rot * Shear * scale
    const double m00 = fx * cr * p.scale, m01 = fx * (cr * k - sr) * p.scale;
    const double m10 = fy * sr * p.scale, m11 = fy * (sr * k + cr) * p.scale;
    const double det = m00 * m11 - m01 * m10;
    a = m11 / det;
    b = -m01 / det;
    c = -m10 / det;
    d = m00 / det;
    cx = 0.5 * (width - 1);
    cy = 0.5 * (height - 1);
    tx = p.translate_x * width;
    ty = p.translate_y * height;
  }

  std::pair<double, double> operator()(int r, int col) const {
    const double u = col - cx - tx, v = r - cy - ty;
    return {a * u + b * v + cx, c * u + d * v + cy};  // (x, y)
  }
};

template <typename T>
std::vector<T> flip_generic(const std::vector<T>& px, int h, int w, bool fh, bool fv) {
  std::vector<T> out(px.size());
  for (int r = 0; r < h; ++r) {
    const int sr = fv ? h - 1 - r : r;
    for (int c = 0; c < w; ++c) out[std::size_t(r) * w + c] = px[std::size_t(sr) * w + (fh ? w - 1 - c : c)];
  }
  return out;
}

}  // namespace

std::vector<double> flip_plane(std::span<const double> plane, int height, int width, bool horizontal,
                               bool vertical) {
  return flip_generic(std::vector<double>(plane.begin(), plane.end()), height, width, horizontal, vertical);
}

Slice warp(const Slice& s, const AugmentParams& params) {
  params.validate();
  if (params.is_pure_flip()) return {s.height, s.width, flip_generic(s.pixels, s.height, s.width, params.flip_h, params.flip_v)};
  const InverseMap inv(params, s.height, s.width);
  Slice out = Slice::zeros(s.height, s.width);
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const auto [x, y] = inv(r, c);
      const double x0f = std::floor(x), y0f = std::floor(y);
      const double fx = x - x0f, fy = y - y0f;
      const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
      double v = 0.0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = y0 + dy, xx = x0 + dx;
          if (yy < 0 || xx < 0 || yy >= s.height || xx >= s.width) continue;
          v += (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx) * s.at(yy, xx);
        }
      }
      out.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

BinaryMask warp(const BinaryMask& m, const AugmentParams& params) {
  params.validate();
  if (params.is_pure_flip()) {
    return {m.height, m.width, flip_generic(m.pixels, m.height, m.width, params.flip_h, params.flip_v)};
  }
  const InverseMap inv(params, m.height, m.width);
  BinaryMask out = BinaryMask::zeros(m.height, m.width);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const auto [x, y] = inv(r, c);
      const int xx = static_cast<int>(std::floor(x + 0.5)), yy = static_cast<int>(std::floor(y + 0.5));
      if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width) continue;
      out.at(r, c) = m.at(yy, xx);
    }
  }
  return out;
}

DomainSample augment(const DomainSample& sample, const AugmentParams& params) {
  DomainSample out = sample;
  out.image = warp(sample.image, params);
  if (sample.label) out.label = warp(*sample.label, params);
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t dataset_size, int batch_size,
                                                   std::uint64_t shuffle_seed, std::uint64_t epoch, bool shuffle) {
  if (batch_size < 1) throw ConfigError("make_batches: batch size must be >= 1");
  if (dataset_size == 0) throw DataError("make_batches: dataset is empty");
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng = make_rng(shuffle_seed, {tag(Stream::kBatchOrder), epoch});
    for (std::size_t i = dataset_size - 1; i > 0; --i) {
      const std::size_t j = rng() % (i + 1);
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < dataset_size; b += batch_size) {
    batches.emplace_back(order.begin() + b, order.begin() + std::min(dataset_size, b + batch_size));
  }
  return batches;
}

}  // namespace dasc
