#include "dasc/params.hpp"

#include <array>

#include "dasc/error.hpp"

namespace dasc {
namespace {
constexpr std::array<std::pair<Role, const char*>, 7> kRoleNames{{
    {Role::kEncoder, "encoder"},
    {Role::kMajorDecoder, "major_decoder"},
    {Role::kAux1, "aux1"},
    {Role::kAux2, "aux2"},
    {Role::kCamExtractor, "cam_extractor"},
    {Role::kMaskDiscriminator, "mask_discriminator"},
    {Role::kFeatureDiscriminator, "feature_discriminator"},
}};
}  // namespace

std::string role_name(Role role) {
  for (auto& [r, n] : kRoleNames)
    if (r == role) return n;
  throw ConfigError("unknown role");
}

Role role_from_name(const std::string& name) {
  for (auto& [r, n] : kRoleNames)
    if (name == n) return r;
  throw ConfigError("unknown parameter role '" + name + "'");
}

std::size_t ParameterVector::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

const ParamEntry& ParameterVector::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ShapeError("parameter '" + name + "' not found");
}

bool ParameterVector::compatible(const ParameterVector& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
  }
  return true;
}

void ParameterVector::require_compatible(const ParameterVector& other) const {
  if (entries_.size() != other.entries_.size()) {
    throw ShapeError("parameter vectors differ in length: " + std::to_string(entries_.size()) + " vs " +
                     std::to_string(other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name) throw ShapeError("parameter name mismatch at " + std::to_string(i) + ": '" + a.name + "' vs '" + b.name + "'");
    if (a.value.shape() != b.value.shape()) {
      throw ShapeError("parameter '" + a.name + "' shape " + shape_str(a.value.shape()) + " vs " +
                       shape_str(b.value.shape()));
    }
  }
}

ParameterVector ParameterVector::select(Role role) const {
  const std::string prefix = role_name(role) + ".";
  std::vector<ParamEntry> out;
  for (const auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) out.push_back(e);
  return ParameterVector(std::move(out));
}

void ParameterVector::append(const ParameterVector& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

ParameterVector ParameterVector::linear_combination(double alpha, const ParameterVector& a, double beta,
                                                    const ParameterVector& b) {
  a.require_compatible(b);
  ParameterVector out = a;
  for (std::size_t i = 0; i < out.entries_.size(); ++i) {
    Tensor& dst = out.entries_[i].value;
    const Tensor& x = a.entries_[i].value;
    const Tensor& y = b.entries_[i].value;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = alpha * x[k] + beta * y[k];
  }
  return out;
}

ParameterVector get_params(const ModuleGroup& group) {
  std::vector<ParamEntry> entries;
  for (const auto& [role, module] : group) {
    for (const auto& t : module->named_tensors(role_name(role) + ".")) {
      entries.push_back({t.name, t.var.value(), t.trainable()});
    }
  }
  return ParameterVector(std::move(entries));
}

void set_params(const ModuleGroup& group, const ParameterVector& params) {
  std::vector<nn::NamedTensor> targets;
  for (const auto& [role, module] : group) module->enumerate(role_name(role) + ".", targets);
  if (targets.size() != params.size()) {
    throw ShapeError("set_params: expected " + std::to_string(targets.size()) + " entries, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = params.entries()[i];
    if (src.name != targets[i].name) {
      throw ShapeError("set_params: entry " + std::to_string(i) + " is '" + src.name + "', expected '" +
                       targets[i].name + "'");
    }
    if (src.value.shape() != targets[i].var.value().shape()) {
      throw ShapeError("set_params: '" + src.name + "' has shape " + shape_str(src.value.shape()) +
                       ", expected " + shape_str(targets[i].var.value().shape()));
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i].var.mutable_value() = params.entries()[i].value;
}

}  // namespace dasc
