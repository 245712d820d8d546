#include "dasc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dasc/error.hpp"
#include "dasc/hashing.hpp"

namespace dasc {
namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s;
}

std::vector<std::string> path_strings(const std::vector<fs::path>& v) {
  std::vector<std::string> out;
  for (const auto& p : v) out.push_back(p.string());
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected an integer, got '" + v + "'");
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

// One binding per config key: how to read it and how to print it back.
struct Binding {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Table = std::map<std::string, Binding>;  // "section.key" -> binding, "" section for globals

#define DASC_DOUBLE(name, field)                                                                  \
  t[name] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_double(k, v); }, \
             [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); }}
#define DASC_INT(name, field)                                                                          \
  t[name] = {[](RunConfig& c, const std::string& k, const std::string& v) {                           \
               c.field = static_cast<decltype(c.field)>(parse_int(k, v));                              \
             },                                                                                        \
             [](const RunConfig& c) { return std::to_string(c.field); }}
#define DASC_BOOL(name, field)                                                                  \
  t[name] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
             [](const RunConfig& c) { return fmt(static_cast<bool>(c.field)); }}
#define DASC_PATHS(name, field)                                                                          \
  t[name] = {[](RunConfig& c, const std::string&, const std::string& v) {                                \
               c.field.clear();                                                                           \
               for (auto& s : split_list(v)) c.field.emplace_back(s);                                     \
             },                                                                                           \
             [](const RunConfig& c) { return join(path_strings(c.field)); }}

const Table& table() {
  static const Table tbl = [] {
    Table t;
    t["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.set_seed(parse_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    t["out_dir"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                    [](const RunConfig& c) { return c.out_dir.string(); }};
    t["checkpoint_every"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                               c.checkpoint_every = static_cast<int>(parse_int(k, v));
                             },
                             [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }};

    t["data.cache_dir"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.data.cache_dir = v; },
                           [](const RunConfig& c) { return c.data.cache_dir.string(); }};
    DASC_PATHS("data.source_images", data.source_images);
    DASC_PATHS("data.source_labels", data.source_labels);
    DASC_PATHS("data.source_lungs", data.source_lungs);
    DASC_PATHS("data.target_images", data.target_images);
    DASC_PATHS("data.target_labels", data.target_labels);
    DASC_PATHS("data.target_lungs", data.target_lungs);
    DASC_BOOL("data.lung_fallback", data.lung_fallback);
    DASC_INT("data.crop_margin", data.crop_margin);
    t["data.resize_mode"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                               if (v == "direct") c.data.resize_mode = ResizeMode::kDirect;
                               else if (v == "pad") c.data.resize_mode = ResizeMode::kPad;
                               else throw ConfigError("config key " + k + ": expected direct or pad");
                             },
                             [](const RunConfig& c) {
                               return std::string(c.data.resize_mode == ResizeMode::kDirect ? "direct" : "pad");
                             }};
    DASC_DOUBLE("data.hu_lo", data.hu_lo);
    DASC_DOUBLE("data.hu_hi", data.hu_hi);

    t["synth.preset"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                           const SynthSpec old = c.synth.spec;
                           c.synth.preset = v;
                           c.synth.spec = synth_preset(v);
                           c.synth.spec.n_samples = old.n_samples;
                           c.synth.spec.height = old.height;
                           c.synth.spec.width = old.width;
                         },
                         [](const RunConfig& c) { return c.synth.preset; }};
    DASC_INT("synth.seed", synth.spec.seed);
    DASC_INT("synth.n_samples", synth.spec.n_samples);
    DASC_INT("synth.height", synth.spec.height);
    DASC_INT("synth.width", synth.spec.width);
    DASC_INT("synth.blob_count_min", synth.spec.blob_count_min);
    DASC_INT("synth.blob_count_max", synth.spec.blob_count_max);
    DASC_DOUBLE("synth.blob_scale_min", synth.spec.blob_scale_min);
    DASC_DOUBLE("synth.blob_scale_max", synth.spec.blob_scale_max);
    DASC_INT("synth.distractor_count", synth.spec.distractor_count);
    DASC_DOUBLE("synth.feather_px", synth.spec.feather_px);
    DASC_DOUBLE("synth.intra_blob_gradient", synth.spec.intra_blob_gradient);
    DASC_DOUBLE("synth.fraction_negative", synth.spec.fraction_negative);
    DASC_BOOL("synth.share_geometry", synth.spec.share_geometry);
    for (const std::string dom : {"source", "target"}) {
      auto prof = [dom](RunConfig& c) -> DomainProfile& { return dom == "source" ? c.synth.spec.source : c.synth.spec.target; };
      auto cprof = [dom](const RunConfig& c) -> const DomainProfile& {
        return dom == "source" ? c.synth.spec.source : c.synth.spec.target;
      };
      const std::pair<const char*, double DomainProfile::*> fields[] = {
          {"fg_mean", &DomainProfile::fg_mean},           {"fg_std", &DomainProfile::fg_std},
          {"bg_mean", &DomainProfile::bg_mean},           {"noise_sigma", &DomainProfile::noise_sigma},
          {"bg_gradient", &DomainProfile::bg_gradient}, {"distractor_intensity", &DomainProfile::distractor_intensity}};
      for (auto [name, member] : fields) {
        t["synth." + dom + "_" + name] = {
            [prof, member](RunConfig& c, const std::string& k, const std::string& v) { prof(c).*member = parse_double(k, v); },
            [cprof, member](const RunConfig& c) { return fmt(cprof(c).*member); }};
      }
    }

    t["networks.preset"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                              c.set_preset(preset_from_name(v));
                            },
                            [](const RunConfig& c) { return preset_name(c.train.arch_preset); }};
    DASC_INT("networks.height", train.height);
    DASC_INT("networks.width", train.width);

    DASC_DOUBLE("adaptation.lambda_seg", train.loss.seg);
    DASC_DOUBLE("adaptation.lambda_weight", train.loss.weight);
    DASC_DOUBLE("adaptation.lambda_adv_seg", train.loss.adv_seg);
    DASC_DOUBLE("adaptation.lambda_adv_fea", train.loss.adv_fea);
    DASC_DOUBLE("adaptation.lambda_dis", train.loss.dis);
    DASC_DOUBLE("adaptation.max_pixel_weight", train.loss.max_pixel_weight);
    DASC_DOUBLE("adaptation.lr_generator", train.lr_generator);
    DASC_DOUBLE("adaptation.lr_discriminators", train.lr_discriminators);
    DASC_DOUBLE("adaptation.beta1", train.beta1);
    DASC_DOUBLE("adaptation.beta2", train.beta2);
    DASC_INT("adaptation.batch_size", train.batch_size);
    DASC_INT("adaptation.epochs_da", train.epochs_da);
    DASC_INT("adaptation.epochs_cam", train.epochs_cam);
    DASC_DOUBLE("adaptation.lr_power", train.lr_power);
    DASC_BOOL("adaptation.base_da_mode", train.base_da_mode);
    DASC_BOOL("adaptation.cam_branch", train.cam_branch);
    DASC_BOOL("adaptation.feature_alignment", train.feature_alignment);
    DASC_BOOL("adaptation.cam_attention_on_target", train.cam_attention_on_target);
    DASC_BOOL("adaptation.augment", train.augment);
    DASC_BOOL("adaptation.positive_source_only", train.positive_source_only);

    DASC_INT("selfcorrect.cycles", selfcorrect.cycles);
    DASC_INT("selfcorrect.epochs_per_cycle", selfcorrect.epochs_per_cycle);
    DASC_BOOL("selfcorrect.tta_flip_h", selfcorrect.tta_flip_h);
    DASC_BOOL("selfcorrect.tta_flip_v", selfcorrect.tta_flip_v);
    DASC_DOUBLE("selfcorrect.pseudo_threshold", selfcorrect.pseudo_threshold);
    DASC_BOOL("selfcorrect.soft_targets", selfcorrect.soft_targets);
    DASC_BOOL("selfcorrect.positive_source_only", selfcorrect.positive_source_only);

    DASC_BOOL("eval.positive_only", eval.positive_only);
    DASC_INT("eval.batch_size", eval.batch_size);
    DASC_INT("eval.overlays", eval.overlays);
    t["eval.compare"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.eval.compare = split_list(v); },
                         [](const RunConfig& c) { return join(c.eval.compare); }};
    return t;
  }();
  return tbl;
}

#undef DASC_DOUBLE
#undef DASC_INT
#undef DASC_BOOL
#undef DASC_PATHS

const std::vector<std::string> kSections{"data", "synth", "networks", "adaptation", "selfcorrect", "eval"};

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.set_seed(0);
  return c;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

void RunConfig::set_preset(ArchPreset p) {
  train.arch_preset = p;
  // Resolutions still at the other preset's default follow the preset.
  if (p == ArchPreset::kPaper && train.height == 64 && train.width == 64) {
    train.height = train.width = 320;
  } else if (p == ArchPreset::kSmall && train.height == 320 && train.width == 320) {
    train.height = train.width = 64;
  }
}

RunConfig RunConfig::parse(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig c = defaults();
  const Table& t = table();
  // Globals first so that section keys (e.g. synth.seed) can refine them.
  std::vector<std::pair<std::string, std::string>> ordered;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      ordered.insert(ordered.begin(), {name, node.data()});
      continue;
    }
    if (std::find(kSections.begin(), kSections.end(), name) == kSections.end()) {
      throw ConfigError("unknown config section [" + name + "]");
    }
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& [key, leaf] : node) keys.emplace_back(name + "." + key, leaf.data());
    // The preset must be applied before any override in its section.
    std::stable_partition(keys.begin(), keys.end(), [](const auto& kv) { return kv.first.ends_with(".preset"); });
    ordered.insert(ordered.end(), keys.begin(), keys.end());
  }
  for (const auto& [key, value] : ordered) {
    auto it = t.find(key);
    if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, key, trim(value));
  }
  if (const char* env = std::getenv("DASC_OUT_DIR")) c.out_dir = env;
  if (const char* env = std::getenv("DASC_CACHE_DIR")) c.data.cache_dir = env;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::validate() const {
  train.validate();
  selfcorrect.validate();
  synth.spec.validate();
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (!(data.hu_hi > data.hu_lo)) throw ConfigError("data.hu_hi must exceed data.hu_lo");
  if (data.crop_margin < 0) throw ConfigError("data.crop_margin must be non-negative");
  auto paired = [](const std::vector<fs::path>& a, const std::vector<fs::path>& b, const char* what) {
    if (!b.empty() && b.size() != a.size()) throw ConfigError(std::string(what) + " must list one file per image volume");
  };
  paired(data.source_images, data.source_labels, "data.source_labels");
  paired(data.source_images, data.source_lungs, "data.source_lungs");
  paired(data.target_images, data.target_labels, "data.target_labels");
  paired(data.target_images, data.target_lungs, "data.target_lungs");
}

std::string RunConfig::to_ini() const {
  const Table& t = table();
  std::ostringstream os;
  for (const auto& [key, b] : t) {
    if (key.find('.') == std::string::npos) os << key << " = " << b.get(*this) << "\n";
  }
  for (const auto& sec : kSections) {
    os << "\n[" << sec << "]\n";
    for (const auto& [key, b] : t) {
      if (key.starts_with(sec + ".")) os << key.substr(sec.size() + 1) << " = " << b.get(*this) << "\n";
    }
  }
  return os.str();
}

std::string RunConfig::hash() const { return sha256_hex(to_ini()); }

}  // namespace dasc
