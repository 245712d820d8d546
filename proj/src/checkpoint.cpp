#include "dasc/checkpoint.hpp"

#include <hdf5.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dasc/error.hpp"

namespace dasc {
namespace fs = std::filesystem;

namespace {

// Closes an HDF5 handle with the matching close function.
struct H5Handle {
  hid_t id;
  herr_t (*close)(hid_t);
  H5Handle(hid_t i, herr_t (*c)(hid_t), const std::string& what) : id(i), close(c) {
    if (id < 0) throw DataError("HDF5: " + what);
  }
  ~H5Handle() { close(id); }
  H5Handle(const H5Handle&) = delete;
  H5Handle& operator=(const H5Handle&) = delete;
};

void quiet_hdf5() {
  static const bool once = [] {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    return true;
  }();
  (void)once;
}

void write_int_attr(hid_t obj, const char* name, long long v) {
  H5Handle space(H5Screate(H5S_SCALAR), H5Sclose, "attribute space");
  H5Handle attr(H5Acreate2(obj, name, H5T_STD_I64LE, space.id, H5P_DEFAULT, H5P_DEFAULT), H5Aclose,
                std::string("create attribute ") + name);
  H5Awrite(attr.id, H5T_NATIVE_LLONG, &v);
}

long long read_int_attr(hid_t obj, const char* name) {
  H5Handle attr(H5Aopen(obj, name, H5P_DEFAULT), H5Aclose, std::string("missing attribute ") + name);
  long long v = 0;
  H5Aread(attr.id, H5T_NATIVE_LLONG, &v);
  return v;
}

herr_t collect_name(hid_t, const char* name, const H5L_info_t*, void* out) {
  static_cast<std::vector<std::string>*>(out)->emplace_back(name);
  return 0;
}

}  // namespace

void write_named_arrays(const fs::path& path, const std::vector<NamedArray>& arrays) {
  quiet_hdf5();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  H5Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose,
                "cannot create " + path.string());
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    const auto& a = arrays[k];
    if (a.name.empty() || a.name.find('/') != std::string::npos) throw DataError("HDF5: bad array name " + a.name);
    std::vector<hsize_t> dims(a.value.shape().begin(), a.value.shape().end());
    H5Handle space(dims.empty() ? H5Screate(H5S_SCALAR) : H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr),
                   H5Sclose, "dataspace");
    H5Handle ds(H5Dcreate2(file.id, a.name.c_str(), H5T_IEEE_F64LE, space.id, H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                H5Dclose, "create dataset " + a.name);
    if (a.value.size() && H5Dwrite(ds.id, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, a.value.data()) < 0) {
      throw DataError("HDF5: write failed for " + a.name);
    }
    write_int_attr(ds.id, "index", static_cast<long long>(k));
    write_int_attr(ds.id, "trainable", a.trainable ? 1 : 0);
  }
}

std::vector<NamedArray> read_named_arrays(const fs::path& path) {
  quiet_hdf5();
  if (!fs::exists(path)) throw DataError("missing array container " + path.string());
  H5Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose, "cannot open " + path.string());
  std::vector<std::string> names;
  H5Literate(file.id, H5_INDEX_NAME, H5_ITER_NATIVE, nullptr, collect_name, &names);
  std::vector<std::pair<long long, NamedArray>> items;
  for (const auto& name : names) {
    H5Handle ds(H5Dopen2(file.id, name.c_str(), H5P_DEFAULT), H5Dclose, "open dataset " + name);
    H5Handle space(H5Dget_space(ds.id), H5Sclose, "dataspace of " + name);
    const int rank = H5Sget_simple_extent_ndims(space.id);
    std::vector<hsize_t> dims(static_cast<std::size_t>(std::max(rank, 0)));
    if (rank > 0) H5Sget_simple_extent_dims(space.id, dims.data(), nullptr);
    Shape shape(dims.begin(), dims.end());
    NamedArray a{name, Tensor(shape), read_int_attr(ds.id, "trainable") != 0};
    if (a.value.size() && H5Dread(ds.id, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, a.value.data()) < 0) {
      throw DataError("HDF5: read failed for " + name);
    }
    items.emplace_back(read_int_attr(ds.id, "index"), std::move(a));
  }
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<NamedArray> out;
  for (auto& [idx, a] : items) out.push_back(std::move(a));
  return out;
}

void save_checkpoint(const fs::path& dir, const ParameterVector& params, CheckpointManifest manifest) {
  fs::create_directories(dir);
  std::map<std::string, std::vector<NamedArray>> by_role;
  manifest.roles.clear();
  for (const auto& e : params.entries()) {
    const std::string role = e.name.substr(0, e.name.find('.'));
    role_from_name(role);  // validates the prefix
    if (!by_role.count(role)) manifest.roles.push_back(role);
    by_role[role].push_back({e.name, e.value, e.trainable});
  }
  for (const auto& role : manifest.roles) write_named_arrays(dir / (role + ".h5"), by_role[role]);
  nlohmann::json j{{"stage", manifest.stage},
                   {"arch_preset", preset_name(manifest.preset)},
                   {"resolution", {manifest.height, manifest.width}},
                   {"seed", manifest.seed},
                   {"cycle", manifest.cycle},
                   {"config_hash", manifest.config_hash},
                   {"head", manifest.head},
                   {"roles", manifest.roles}};
  std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
}

CheckpointManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  CheckpointManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.preset = preset_from_name(j.at("arch_preset").get<std::string>());
  m.height = j.at("resolution").at(0).get<int>();
  m.width = j.at("resolution").at(1).get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.cycle = j.at("cycle").get<int>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.head = j.value("head", "major");
  m.roles = j.at("roles").get<std::vector<std::string>>();
  return m;
}

ParameterVector load_checkpoint(const fs::path& dir, CheckpointManifest* manifest) {
  const CheckpointManifest m = read_manifest(dir);
  ParameterVector pv;
  for (const auto& role : m.roles) {
    for (auto& a : read_named_arrays(dir / (role + ".h5"))) pv.entries().push_back({a.name, std::move(a.value), a.trainable});
  }
  if (manifest) *manifest = m;
  return pv;
}

}  // namespace dasc
