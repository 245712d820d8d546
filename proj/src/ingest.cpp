#include "dasc/ingest.hpp"

#include <cstdio>

#include <spdlog/spdlog.h>

#include "dasc/error.hpp"
#include "dasc/nifti.hpp"

namespace dasc {
namespace fs = std::filesystem;

std::string scan_name(const fs::path& p) {
  std::string s = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e = ext;
    if (s.size() > e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0) return s.substr(0, s.size() - e.size());
  }
  return p.stem().string();
}

namespace {

void require_same_grid(const Volume& a, const Volume& b, const std::string& what, const fs::path& p) {
  if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz) {
    throw DataError(what + " " + p.string() + " does not match its scan's grid");
  }
}

BinaryMask nonzero_plane(const std::vector<double>& plane, int h, int w) {
  BinaryMask m = BinaryMask::zeros(h, w);
  for (std::size_t i = 0; i < plane.size(); ++i) m.pixels[i] = plane[i] != 0.0;
  return m;
}

}  // namespace

Dataset ingest_scan(const ScanFiles& files, Domain domain, const IngestOptions& opts) {
  const std::string name = scan_name(files.image);
  if (files.lung.empty() && !opts.lung_fallback) {
    throw DataError("scan " + name + ": no lung mask given; supply one or set data.lung_fallback = true");
  }
  const Volume vol = read_nifti(files.image);
  std::optional<Volume> label, lung;
  if (!files.label.empty()) {
    label = read_nifti(files.label);
    require_same_grid(vol, *label, "label", files.label);
  }
  if (!files.lung.empty()) {
    lung = read_nifti(files.lung);
    require_same_grid(vol, *lung, "lung mask", files.lung);
  }

  Dataset out;
  const int H = vol.ny, W = vol.nx;
  for (int z = 0; z < vol.nz; ++z) {
    char id[32];
    std::snprintf(id, sizeof id, "_z%03d", z);
    const std::string sid = name + id;
    const auto hu = vol.axial(z);
    const BinaryMask lm = lung ? nonzero_plane(lung->axial(z), H, W) : lung_mask_fallback(hu, H, W);
    bool any = false;
    for (auto v : lm.pixels) any = any || v;
    if (!any) {
      spdlog::debug("{}: no lung, skipped", sid);
      continue;
    }
    const BoundingBox box = lung_bbox(lm, opts.crop_margin, sid);
    Slice img{H, W, window_normalize(hu, sid, opts.hu_lo, opts.hu_hi)};
    DomainSample s;
    s.image = resize(crop(img, box), opts.height, opts.width, opts.resize_mode);
    s.domain = domain;
    s.sample_id = sid;
    if (label) {
      s.label = resize(crop(nonzero_plane(label->axial(z), H, W), box), opts.height, opts.width, opts.resize_mode);
      bool fg = false;
      for (auto v : s.label->pixels) fg = fg || v;
      s.class_tag = fg ? ClassTag::kPositive : ClassTag::kNegative;
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("scan " + name + ": no slice contains lung");
  return out;
}

Dataset ingest_scans(const std::vector<fs::path>& images, const std::vector<fs::path>& labels,
                     const std::vector<fs::path>& lungs, Domain domain, const IngestOptions& opts) {
  if (!labels.empty() && labels.size() != images.size()) throw ConfigError("label list length differs from images");
  if (!lungs.empty() && lungs.size() != images.size()) throw ConfigError("lung mask list length differs from images");
  Dataset out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ScanFiles f{images[i], labels.empty() ? fs::path{} : labels[i], lungs.empty() ? fs::path{} : lungs[i]};
    auto part = ingest_scan(f, domain, opts);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace dasc
