#pragma once

// Label co-travel oracle for augment(). The image path is bilinear, so warping
// a coordinate ramp recovers the exact source coordinate each output pixel
// sampled. A delta label at (r0, c0) must land on exactly the output pixels
// whose recovered coordinate rounds to (r0, c0), and the delta image must put
// more than a quarter of its mass on each of them.

#include <algorithm>
#include <cmath>
#include <string>

#include "dasc/datapipe.hpp"

namespace dasc::check {

struct CoTravelReport {
  int pairs = 0;
  int failures = 0;
  int labelled_pixels = 0;
  std::string first_failure;
};

inline CoTravelReport check_cotravel(int pairs, std::uint64_t seed, int size = 48) {
  CoTravelReport rep;
  const int margin = 8;
  Slice ramp_x = Slice::zeros(size, size), ramp_y = Slice::zeros(size, size), ones = Slice::zeros(size, size);
  std::fill(ones.pixels.begin(), ones.pixels.end(), 1.0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      ramp_x.at(r, c) = c / static_cast<double>(size - 1);
      ramp_y.at(r, c) = r / static_cast<double>(size - 1);
    }

  for (int k = 0; k < pairs; ++k) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(k)});
    const int r0 = uniform_int(rng, margin, size - 1 - margin), c0 = uniform_int(rng, margin, size - 1 - margin);
    const AugmentParams p = AugmentParams::draw(rng);

    DomainSample s;
    s.image = Slice::zeros(size, size);
    s.image.at(r0, c0) = 1.0;
    s.label = BinaryMask::zeros(size, size);
    s.label->at(r0, c0) = 1;
    const DomainSample out = augment(s, p);
    const Slice wx = warp(ramp_x, p), wy = warp(ramp_y, p), inside = warp(ones, p);

    bool ok = true;
    for (int r = 0; r < size && ok; ++r) {
      for (int c = 0; c < size; ++c) {
        const double sx = wx.at(r, c) * (size - 1), sy = wy.at(r, c) * (size - 1);
        // The ramp is exact only where the whole 2x2 stencil lies inside the
        // frame, which is where a warped all-ones image is still 1.
        if (inside.at(r, c) < 1.0 - 1e-12) {
          if (out.label->at(r, c) != 0) {
            ok = false;
            break;
          }
          continue;
        }
        const bool expect = std::floor(sx + 0.5) == c0 && std::floor(sy + 0.5) == r0;
        const bool got = out.label->at(r, c) == 1;
        if (expect != got || (got && !(out.image.at(r, c) > 0.25))) {
          ok = false;
          rep.first_failure = "pair " + std::to_string(k) + " pixel (" + std::to_string(r) + "," +
                              std::to_string(c) + ")";
          break;
        }
        rep.labelled_pixels += got ? 1 : 0;
      }
    }
    for (auto v : out.label->pixels) ok = ok && (v == 0 || v == 1);
    ++rep.pairs;
    if (!ok) {
      ++rep.failures;
      if (rep.first_failure.empty()) rep.first_failure = "pair " + std::to_string(k);
    }
  }
  return rep;
}

}  // namespace dasc::check
