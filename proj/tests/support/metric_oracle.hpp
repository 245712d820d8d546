#pragma once

// Brute-force metric definitions: direct pixel counting and an all-pairs
// Hausdorff search. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dasc/evalmetrics.hpp"

namespace dasc::check {

struct OracleMetrics {
  double dice, sen, spc, ja, hd;
};

inline OracleMetrics oracle_metrics(const BinaryMask& p, const BinaryMask& t) {
  double tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<std::pair<int, int>> ps, ts;
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) {
      const bool a = p.at(r, c) != 0, b = t.at(r, c) != 0;
      tp += a && b;
      fp += a && !b;
      fn += !a && b;
      tn += !a && !b;
      if (a) ps.emplace_back(r, c);
      if (b) ts.emplace_back(r, c);
    }
  }
  OracleMetrics m{};
  m.dice = (tp + fp + fn == 0) ? 1.0 : 2 * tp / (2 * tp + fp + fn);
  m.ja = (tp + fp + fn == 0) ? 1.0 : tp / (tp + fp + fn);
  m.sen = (tp + fn == 0) ? 1.0 : tp / (tp + fn);
  m.spc = (tn + fp == 0) ? 1.0 : tn / (tn + fp);
  if (ps.empty() && ts.empty()) {
    m.hd = 0.0;
  } else if (ps.empty() || ts.empty()) {
    m.hd = std::sqrt(double(p.height) * p.height + double(p.width) * p.width);
  } else {
    auto directed = [](const auto& from, const auto& to) {
      long best_of_all = 0;
      for (auto [r, c] : from) {
        long best = std::numeric_limits<long>::max();
        for (auto [rr, cc] : to) best = std::min<long>(best, long(r - rr) * (r - rr) + long(c - cc) * (c - cc));
        best_of_all = std::max(best_of_all, best);
      }
      return best_of_all;
    };
    m.hd = std::sqrt(static_cast<double>(std::max(directed(ps, ts), directed(ts, ps))));
  }
  return m;
}

/// Random pair with varied density, occasionally empty on one or both sides.
inline std::pair<BinaryMask, BinaryMask> random_mask_pair(Rng& rng, int max_side = 32) {
  const int h = uniform_int(rng, 1, max_side), w = uniform_int(rng, 1, max_side);
  auto one = [&] {
    BinaryMask m = BinaryMask::zeros(h, w);
    const double density = uniform01(rng) < 0.1 ? 0.0 : uniform01(rng) * uniform01(rng);
    for (auto& v : m.pixels) v = uniform01(rng) < density ? 1 : 0;
    return m;
  };
  BinaryMask a = one(), b = one();
  return {a, b};
}

/// Number of (pair, metric) disagreements over `pairs` random pairs plus the
/// hand examples; exact comparison throughout.
inline int metric_oracle_mismatches(int pairs, std::uint64_t seed, std::string* detail = nullptr) {
  int bad = 0;
  auto cmp = [&](const std::string& id, const BinaryMask& p, const BinaryMask& t) {
    const auto o = oracle_metrics(p, t);
    const auto s = sample_metrics(id, p, t);
    const bool ok = s.dice == o.dice && s.sen == o.sen && s.spc == o.spc && s.ja == o.ja && s.hd == o.hd;
    if (!ok) {
      ++bad;
      if (detail && detail->empty()) detail->assign(id);
    }
  };
  Rng rng = make_rng(seed, {});
  for (int i = 0; i < pairs; ++i) {
    auto [p, t] = random_mask_pair(rng);
    cmp("random_" + std::to_string(i), p, t);
  }
  // hand examples
  BinaryMask a = BinaryMask::zeros(2, 2), b = BinaryMask::zeros(2, 2);
  a.at(0, 0) = 1;
  b.at(0, 0) = b.at(0, 1) = b.at(1, 0) = 1;  // overlap 1 of |A|=1, |B|=3
  const auto m = sample_metrics("overlap", a, b);
  if (m.dice != 0.5 || m.ja != 1.0 / 3.0) ++bad;
  BinaryMask s1 = BinaryMask::zeros(8, 8), s2 = BinaryMask::zeros(8, 8);
  s1.at(0, 0) = 1;
  s2.at(3, 4) = 1;
  if (hausdorff(s1, s2) != 5.0) ++bad;
  return bad;
}

}  // namespace dasc::check
