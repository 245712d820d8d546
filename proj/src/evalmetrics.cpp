#include "dasc/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "dasc/error.hpp"
#include "dasc/image.hpp"

namespace dasc {

Confusion confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw ShapeError("confusion: prediction and truth differ in shape");
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool p = pred.pixels[i], t = truth.pixels[i];
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice(const Confusion& c) {
  const auto den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * c.tp / static_cast<double>(den);
}

double sen(const Confusion& c) {
  const auto den = c.tp + c.fn;
  return den == 0 ? 1.0 : c.tp / static_cast<double>(den);
}

double spc(const Confusion& c) {
  const auto den = c.tn + c.fp;
  return den == 0 ? 1.0 : c.tn / static_cast<double>(den);
}

double jaccard(const Confusion& c) {
  const auto den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : c.tp / static_cast<double>(den);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void dt1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        if (--k < 0) break;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const BinaryMask& m) {
  const int h = m.height, w = m.width;
  std::vector<double> g(std::size_t(h) * w);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = m.pixels[i] ? 0.0 : kInf;
  std::vector<int> v;
  std::vector<double> z, col(h), out(std::max(h, w));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) col[r] = g[std::size_t(r) * w + c];
    dt1d(col.data(), h, out.data(), v, z);
    for (int r = 0; r < h; ++r) g[std::size_t(r) * w + c] = out[r];
  }
  for (int r = 0; r < h; ++r) {
    dt1d(g.data() + std::size_t(r) * w, w, out.data(), v, z);
    std::copy(out.begin(), out.begin() + w, g.begin() + std::size_t(r) * w);
  }
  return g;
}

double hausdorff(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.height != truth.height || pred.width != truth.width) throw ShapeError("hausdorff: shape mismatch");
  const bool pe = pred.empty(), te = truth.empty();
  if (pe && te) return 0.0;
  if (pe || te) return std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width));
  auto directed = [](const BinaryMask& from, const BinaryMask& to) {
    const auto dt = squared_distance_transform(to);
    double worst = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
      if (from.pixels[i]) worst = std::max(worst, dt[i]);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(pred, truth), directed(truth, pred)));
}

SampleMetrics sample_metrics(const std::string& id, const BinaryMask& pred, const BinaryMask& truth) {
  const Confusion c = confusion(pred, truth);
  return {id, dice(c), sen(c), spc(c), jaccard(c), hausdorff(pred, truth)};
}

MetricsReport aggregate(std::vector<SampleMetrics> samples, std::string model_id, std::string config_hash) {
  MetricsReport r;
  r.model_id = std::move(model_id);
  r.config_hash = std::move(config_hash);
  r.mean.sample_id = "mean";
  if (!samples.empty()) {
    for (const auto& s : samples) {
      r.mean.dice += s.dice;
      r.mean.sen += s.sen;
      r.mean.spc += s.spc;
      r.mean.ja += s.ja;
      r.mean.hd += s.hd;
    }
    const double n = static_cast<double>(samples.size());
    r.mean.dice /= n;
    r.mean.sen /= n;
    r.mean.spc /= n;
    r.mean.ja /= n;
    r.mean.hd /= n;
  }
  r.samples = std::move(samples);
  return r;
}

std::string MetricsReport::to_json() const {
  using nlohmann::json;
  auto row = [](const SampleMetrics& s) {
    return json{{"sample_id", s.sample_id}, {"dice", s.dice}, {"sen", s.sen}, {"spc", s.spc},
                {"ja", s.ja},               {"hd", s.hd}};
  };
  json j;
  j["model_id"] = model_id;
  j["config_hash"] = config_hash;
  j["sample_count"] = samples.size();
  j["conventions"] =
      "fractions in [0,1]; hd in pixels, exact maximum; both masks empty: dice=ja=1, hd=0; one empty: "
      "dice=ja=0, hd=image diagonal; sen=1 without truth foreground; spc=1 without truth background";
  j["mean"] = row(mean);
  j["mean_percent"] = {{"dice", 100 * mean.dice}, {"sen", 100 * mean.sen}, {"spc", 100 * mean.spc},
                       {"ja", 100 * mean.ja},     {"hd", mean.hd}};
  j["samples"] = json::array();
  for (const auto& s : samples) j["samples"].push_back(row(s));
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sample_id,dice,sen,spc,ja,hd\n";
  for (const auto& s : samples) {
    os << s.sample_id << ',' << s.dice << ',' << s.sen << ',' << s.spc << ',' << s.ja << ',' << s.hd << '\n';
  }
  return os.str();
}

void MetricsReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << to_json();
  std::ofstream(dir / "per_sample.csv") << to_csv();
}

std::vector<BinaryMask> predict_masks(const Predictor& predictor, const Dataset& ds, int batch_size) {
  if (batch_size < 1) throw ConfigError("evaluate: batch size must be >= 1");
  std::vector<BinaryMask> out;
  out.reserve(ds.size());
  for (std::size_t b = 0; b < ds.size(); b += batch_size) {
    const std::size_t e = std::min(ds.size(), b + batch_size);
    std::vector<Slice> imgs;
    for (std::size_t i = b; i < e; ++i) imgs.push_back(ds[i].image);
    const Tensor prob = predictor(to_tensor(imgs));
    for (std::size_t i = b; i < e; ++i) {
      const auto plane = plane_of(prob, static_cast<int>(i - b));
      BinaryMask m = BinaryMask::zeros(ds[i].image.height, ds[i].image.width);
      for (std::size_t k = 0; k < plane.size(); ++k) m.pixels[k] = plane[k] > 0.5 ? 1 : 0;
      out.push_back(std::move(m));
    }
  }
  return out;
}

MetricsReport evaluate(const Predictor& predictor, const Dataset& with_truth, const EvalOptions& opts) {
  Dataset ds;
  for (const auto& s : with_truth) {
    if (!s.label) throw DataError("evaluate: sample " + s.sample_id + " has no ground truth");
    if (opts.positive_only && s.label->empty()) continue;
    ds.push_back(s);
  }
  if (ds.empty()) throw DataError("evaluate: no samples to score");
  const auto preds = predict_masks(predictor, ds, opts.batch_size);
  std::vector<SampleMetrics> rows(ds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < ds.size(); ++i) rows[i] = sample_metrics(ds[i].sample_id, preds[i], *ds[i].label);
  return aggregate(std::move(rows), opts.model_id, opts.config_hash);
}

void write_overlay(const std::filesystem::path& path, const Slice& image, const BinaryMask& pred,
                   const BinaryMask& truth) {
  std::vector<std::uint8_t> rgb(image.pixels.size() * 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
    std::uint8_t r = g, gg = g, b = g;
    if (pred.pixels[i] && truth.pixels[i]) {
      r = g / 2;
      gg = 255;
      b = g / 2;
    } else if (pred.pixels[i] != truth.pixels[i]) {
      r = 255;
      gg = g / 2;
      b = g / 2;
    }
    rgb[3 * i] = r;
    rgb[3 * i + 1] = gg;
    rgb[3 * i + 2] = b;
  }
  write_png_rgb8(path, image.height, image.width, rgb);
}

}  // namespace dasc
