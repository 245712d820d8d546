#include "dasc/slice_cache.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "dasc/error.hpp"
#include "dasc/hashing.hpp"

namespace dasc {
namespace fs = std::filesystem;
using nlohmann::json;

std::uint16_t quantize16(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw DataError("slice cache: intensity outside [0,1]");
  return static_cast<std::uint16_t>(std::lround(v * 65535.0));
}

double quantize_value16(double v) { return quantize16(v) / 65535.0; }

namespace {

std::string content_hash(const DomainSample& s) {
  std::string bytes(reinterpret_cast<const char*>(s.image.pixels.data()), s.image.pixels.size() * sizeof(double));
  if (s.label) bytes.append(reinterpret_cast<const char*>(s.label->pixels.data()), s.label->pixels.size());
  bytes += s.class_tag ? class_tag_name(*s.class_tag) : "-";
  return sha256_hex(bytes);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void write_mask(const fs::path& p, const BinaryMask& m) {
  std::vector<std::uint8_t> px(m.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = m.pixels[i] ? 255 : 0;
  write_png_gray8(p, m.height, m.width, px);
}

BinaryMask read_mask(const fs::path& p) {
  const GrayImage g = read_png_gray(p);
  BinaryMask m = BinaryMask::zeros(g.height, g.width);
  for (std::size_t i = 0; i < g.values.size(); ++i) m.pixels[i] = g.values[i] ? 1 : 0;
  return m;
}

std::size_t write_domain(const fs::path& dir, const Dataset& ds, Domain domain, const CacheWriteOptions& opts,
                         json& ids) {
  const fs::path sub = dir / domain_name(domain);
  fs::create_directories(sub);
  if (domain == Domain::kTarget) fs::create_directories(dir / "heldout");
  std::size_t written = 0;
  for (const auto& s : ds) {
    if (s.sample_id.empty() || s.sample_id.find('/') != std::string::npos) {
      throw DataError("slice cache: invalid sample id '" + s.sample_id + "'");
    }
    ids.push_back(s.sample_id);
    const std::string hash = content_hash(s);
    const fs::path side = sub / (s.sample_id + ".json");
    if (fs::exists(side) && read_json(side).value("content_hash", "") == hash) continue;

    s.image.validate("sample " + s.sample_id);
    std::vector<std::uint16_t> px(s.image.pixels.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize16(s.image.pixels[i]);
    write_png_gray16(sub / (s.sample_id + ".png"), s.image.height, s.image.width, px);
    ++written;
    if (s.label) {
      const fs::path mp = domain == Domain::kSource ? sub / (s.sample_id + "_mask.png")
                                                    : dir / "heldout" / (s.sample_id + "_mask.png");
      write_mask(mp, *s.label);
      ++written;
    }
    json j{{"sample_id", s.sample_id},
           {"domain", domain_name(domain)},
           {"class_tag", s.class_tag ? json(class_tag_name(*s.class_tag)) : json(nullptr)},
           {"hu_range", {opts.hu_lo, opts.hu_hi}},
           {"height", s.image.height},
           {"width", s.image.width},
           {"has_label", s.label.has_value()},
           {"content_hash", hash}};
    write_text(side, j.dump(2) + "\n");
    ++written;
  }
  return written;
}

}  // namespace

std::size_t write_slice_cache(const fs::path& dir, const Dataset& source, const Dataset& target,
                              const CacheWriteOptions& opts) {
  fs::create_directories(dir);
  json index{{"source", json::array()}, {"target", json::array()}};
  std::size_t written = write_domain(dir, source, Domain::kSource, opts, index["source"]);
  written += write_domain(dir, target, Domain::kTarget, opts, index["target"]);
  const std::string text = index.dump(2) + "\n";
  const fs::path ip = dir / "index.json";
  bool same = false;
  if (fs::exists(ip)) {
    std::ifstream in(ip);
    same = std::string(std::istreambuf_iterator<char>(in), {}) == text;
  }
  if (!same) {
    write_text(ip, text);
    ++written;
  }
  return written;
}

SliceCache read_slice_cache(const fs::path& dir) {
  const fs::path ip = dir / "index.json";
  if (!fs::exists(ip)) throw DataError("no slice cache at " + dir.string() + " (run `dascseg synth` or `preprocess`)");
  const json index = read_json(ip);
  SliceCache cache;
  for (Domain domain : {Domain::kSource, Domain::kTarget}) {
    const fs::path sub = dir / domain_name(domain);
    for (const auto& idj : index.at(domain_name(domain))) {
      const std::string id = idj.get<std::string>();
      const json side = read_json(sub / (id + ".json"));
      const GrayImage g = read_png_gray(sub / (id + ".png"));
      if (g.bit_depth != 16) throw DataError("sample " + id + ": expected a 16-bit image");
      DomainSample s;
      s.sample_id = id;
      s.domain = domain;
      s.image = Slice::zeros(g.height, g.width);
      for (std::size_t i = 0; i < g.values.size(); ++i) s.image.pixels[i] = g.values[i] / 65535.0;
      if (!side.at("class_tag").is_null()) s.class_tag = class_tag_from_name(side.at("class_tag").get<std::string>());
      const bool has_label = side.value("has_label", false);
      if (domain == Domain::kSource) {
        if (has_label) s.label = read_mask(sub / (id + "_mask.png"));
        cache.source.push_back(std::move(s));
      } else {
        if (has_label) cache.heldout.emplace(id, read_mask(dir / "heldout" / (id + "_mask.png")));
        cache.target.push_back({std::move(s.image), Domain::kTarget, id, s.class_tag});
      }
    }
  }
  return cache;
}

Dataset attach_heldout(const UnlabeledDataset& target, const std::map<std::string, BinaryMask>& heldout) {
  Dataset out;
  out.reserve(target.size());
  for (const auto& t : target) {
    auto it = heldout.find(t.sample_id);
    if (it == heldout.end()) throw DataError("no held-out label for target sample " + t.sample_id);
    out.push_back({t.image, it->second, Domain::kTarget, t.sample_id, t.class_tag});
  }
  return out;
}

}  // namespace dasc
