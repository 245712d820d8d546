#include "dasc/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dasc/error.hpp"
#include "dasc/slice_cache.hpp"

namespace dasc {

void SynthSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth: image must be at least 8x8");
  if (n_samples < 0) throw ConfigError("synth: n_samples must be non-negative");
  if (blob_count_min < 1 || blob_count_max < blob_count_min) throw ConfigError("synth: bad blob count range");
  if (!(blob_scale_min > 0.0) || blob_scale_max < blob_scale_min) throw ConfigError("synth: bad blob scale range");
  // A blob's deformed radius reaches 1.3x its mean; it must fit inside the frame.
  if (blob_scale_max * 1.3 >= 0.5) throw ConfigError("synth: blobs larger than the image");
  if (!(fraction_negative >= 0.0 && fraction_negative <= 1.0)) throw ConfigError("synth: fraction_negative outside [0,1]");
  if (distractor_count < 0 || feather_px < 0.0 || intra_blob_gradient < 0.0) throw ConfigError("synth: negative setting");
  for (const DomainProfile* p : {&source, &target}) {
    for (double v : {p->fg_mean, p->bg_mean, p->distractor_intensity}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("synth: intensities must lie in [0,1]");
    }
    if (p->fg_std < 0.0 || p->noise_sigma < 0.0 || p->bg_gradient < 0.0) throw ConfigError("synth: negative spread");
  }
}

SynthSpec shift_mild() {
  SynthSpec s;
  s.seed = 20211;
  s.source = {0.70, 0.02, 0.25, 0.05, 0.10, 0.80};
  s.target = {0.58, 0.02, 0.30, 0.08, 0.12, 0.72};
  return s;
}

SynthSpec shift_strong() {
  SynthSpec s;
  s.seed = 20212;
  s.source = {0.70, 0.02, 0.25, 0.05, 0.10, 0.80};
  s.target = {0.45, 0.03, 0.30, 0.06, 0.20, 0.60};
  return s;
}

SynthSpec synth_preset(const std::string& name) {
  if (name == "shift-mild") return shift_mild();
  if (name == "shift-strong") return shift_strong();
  throw ConfigError("unknown synthetic preset '" + name + "' (expected shift-mild or shift-strong)");
}

namespace {

struct Blob {
  double cy, cx, radius;
  std::array<double, 3> amp, phase;
  double ramp_angle;
};

struct Geometry {
  bool positive = true;
  std::vector<Blob> blobs;
  std::vector<std::array<double, 3>> distractors;  // cy, cx, radius
  double bg_angle = 0.0;
};

Geometry draw_geometry(const SynthSpec& spec, int index) {
  Rng rng = make_rng(spec.seed, {tag(Stream::kSynthGeometry), static_cast<std::uint64_t>(index)});
  Geometry g;
  g.positive = !(uniform01(rng) < spec.fraction_negative);
  const double m = std::min(spec.height, spec.width);
  g.bg_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const int n = uniform_int(rng, spec.blob_count_min, spec.blob_count_max);
  for (int b = 0; b < n; ++b) {
    Blob blob;
    blob.radius = uniform(rng, spec.blob_scale_min, spec.blob_scale_max) * m;
    const double reach = 1.3 * blob.radius;
    blob.cy = uniform(rng, reach, spec.height - 1 - reach);
    blob.cx = uniform(rng, reach, spec.width - 1 - reach);
    for (int k = 0; k < 3; ++k) {
      blob.amp[k] = uniform(rng, 0.0, 0.1);
      blob.phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    blob.ramp_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    if (g.positive) g.blobs.push_back(blob);
  }
  for (int d = 0; d < spec.distractor_count; ++d) {
    g.distractors.push_back({uniform(rng, 2.0, spec.height - 3.0), uniform(rng, 2.0, spec.width - 3.0),
                             uniform(rng, 0.8, 1.6)});
  }
  return g;
}

// Signed radial excess of (y, x) over the deformed boundary of a blob, in pixels.
double blob_excess(const Blob& b, double y, double x) {
  const double dy = y - b.cy, dx = x - b.cx;
  const double theta = std::atan2(dy, dx);
  double r = b.radius;
  for (int k = 0; k < 3; ++k) r *= 1.0 + b.amp[k] * std::cos((k + 2) * theta + b.phase[k]);
  return std::hypot(dy, dx) - r;
}

// Box-blurred white noise rescaled to unit variance.
std::vector<double> texture(Rng& rng, int h, int w) {
  std::vector<double> raw(std::size_t(h + 2) * (w + 2));
  for (auto& v : raw) v = standard_normal(rng);
  std::vector<double> out(std::size_t(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int dr = 0; dr < 3; ++dr) {
        for (int dc = 0; dc < 3; ++dc) s += raw[std::size_t(r + dr) * (w + 2) + c + dc];
      }
      out[std::size_t(r) * w + c] = s / 3.0;
    }
  }
  return out;
}

}  // namespace

DomainSample generate_sample(const SynthSpec& spec, Domain domain, int index) {
  const int geom_index = domain == Domain::kTarget && !spec.share_geometry ? spec.n_samples + index : index;
  const Geometry g = draw_geometry(spec, geom_index);
  const DomainProfile& prof = domain == Domain::kSource ? spec.source : spec.target;
  const std::uint64_t dtag = spec.share_geometry ? 0 : static_cast<std::uint64_t>(domain) + 1;
  Rng tex_rng = make_rng(spec.seed, {tag(Stream::kSynthTexture), static_cast<std::uint64_t>(geom_index), dtag});
  Rng int_rng = make_rng(spec.seed, {tag(Stream::kSynthIntensity), static_cast<std::uint64_t>(geom_index), dtag});
  const double fg_level = prof.fg_mean + prof.fg_std * standard_normal(int_rng);
  const std::vector<double> noise = texture(tex_rng, spec.height, spec.width);

  const int h = spec.height, w = spec.width;
  DomainSample s;
  s.domain = domain;
  s.sample_id = (domain == Domain::kSource ? "src_" : "tgt_") + std::to_string(index);
  s.class_tag = g.positive ? ClassTag::kPositive : ClassTag::kNegative;
  s.image = Slice::zeros(h, w);
  s.label = BinaryMask::zeros(h, w);
  const double ca = std::cos(g.bg_angle), sa = std::sin(g.bg_angle);
  const double half_diag = 0.5 * std::hypot(h - 1.0, w - 1.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = std::size_t(r) * w + c;
      const double u = ((c - 0.5 * (w - 1)) * ca + (r - 0.5 * (h - 1)) * sa) / half_diag;  // in [-1, 1]
      double bg = prof.bg_mean + 0.5 * prof.bg_gradient * u;
      for (const auto& d : g.distractors) {
        const double dist = std::hypot(r - d[0], c - d[1]);
        if (dist < d[2] + 1.0) bg += (prof.distractor_intensity - bg) * std::clamp(d[2] + 1.0 - dist, 0.0, 1.0);
      }
      double v = bg;
      double min_excess = 1e9;
      const Blob* owner = nullptr;
      for (const auto& b : g.blobs) {
        const double e = blob_excess(b, r, c);
        if (e < min_excess) {
          min_excess = e;
          owner = &b;
        }
      }
      if (owner && min_excess <= 0.0) {
        s.label->pixels[i] = 1;
        const double ramp = ((c - owner->cx) * std::cos(owner->ramp_angle) + (r - owner->cy) * std::sin(owner->ramp_angle)) /
                            owner->radius;
        v = fg_level + spec.intra_blob_gradient * std::clamp(ramp, -1.0, 1.0);
      } else if (owner && spec.feather_px > 0.0 && min_excess < 3.0 * spec.feather_px) {
        // Soft halo outside the support blurs the boundary without shifting the in-mask mean.
        const double t = std::exp(-min_excess / spec.feather_px) * 0.6;
        v = bg + (fg_level - bg) * t;
      }
      v += prof.noise_sigma * noise[i];
      s.image.pixels[i] = quantize_value16(std::clamp(v, 0.0, 1.0));
    }
  }
  return s;
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData d;
  d.source.resize(spec.n_samples);
  d.target.resize(spec.n_samples);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < spec.n_samples; ++i) {
    d.source[i] = generate_sample(spec, Domain::kSource, i);
    d.target[i] = generate_sample(spec, Domain::kTarget, i);
  }
  return d;
}

DomainStats domain_stats(const Dataset& ds) {
  DomainStats st;
  double fg_sum = 0.0, bg_sum = 0.0;
  std::size_t fg_n = 0, bg_n = 0;
  for (const auto& s : ds) {
    if (s.class_tag == ClassTag::kNegative) ++st.negatives; else ++st.positives;
    if (!s.label) continue;
    std::size_t fg_here = 0;
    for (std::size_t i = 0; i < s.image.pixels.size(); ++i) {
      if (s.label->pixels[i]) {
        fg_sum += s.image.pixels[i];
        ++fg_n;
        ++fg_here;
      } else {
        bg_sum += s.image.pixels[i];
        ++bg_n;
      }
    }
    const double frac = static_cast<double>(fg_here) / s.image.pixels.size();
    st.fg_fraction_hist[std::min(9, static_cast<int>(frac / 0.05))]++;
  }
  st.mean_fg_intensity = fg_n ? fg_sum / fg_n : 0.0;
  st.mean_bg_intensity = bg_n ? bg_sum / bg_n : 0.0;
  return st;
}

double histogram_distance(const Dataset& a, const Dataset& b, int bins) {
  if (bins < 2) throw ConfigError("histogram_distance: need at least 2 bins");
  auto hist = [bins](const Dataset& ds) {
    std::vector<double> h(bins, 0.0);
    double total = 0.0;
    for (const auto& s : ds) {
      for (double v : s.image.pixels) {
        h[std::min(bins - 1, static_cast<int>(v * bins))] += 1.0;
        total += 1.0;
      }
    }
    if (total == 0.0) throw DataError("histogram_distance: empty dataset");
    for (auto& x : h) x /= total;
    return h;
  };
  const auto ha = hist(a), hb = hist(b);
  double ca = 0.0, cb = 0.0, w1 = 0.0;
  for (int i = 0; i < bins; ++i) {
    ca += ha[i];
    cb += hb[i];
    w1 += std::abs(ca - cb);
  }
  return w1 / bins;
}

}  // namespace dasc
