#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dasc/nn.hpp"
#include "dasc/tensor.hpp"

namespace dasc {

/// Role tag of a parameter group; doubles as the name prefix of its entries.
enum class Role { kEncoder, kMajorDecoder, kAux1, kAux2, kCamExtractor, kMaskDiscriminator, kFeatureDiscriminator };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

struct ParamEntry {
  std::string name;
  Tensor value;
  bool trainable = true;

  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

/// Ordered named collection of parameter arrays, e.g. a whole generator.
/// Two vectors combine only when names, shapes and order match exactly.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<ParamEntry> entries) : entries_(std::move(entries)) {}

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;

  const ParamEntry& find(const std::string& name) const;
  bool compatible(const ParameterVector& other) const;
  /// Throws ShapeError naming the first mismatch.
  void require_compatible(const ParameterVector& other) const;

  /// Entries whose name starts with `<role>.`.
  ParameterVector select(Role role) const;
  void append(const ParameterVector& other);

  /// alpha * a + beta * b, entrywise.
  static ParameterVector linear_combination(double alpha, const ParameterVector& a, double beta,
                                            const ParameterVector& b);

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<ParamEntry> entries_;
};

/// A network assembled from role-tagged modules.
using ModuleGroup = std::vector<std::pair<Role, const nn::Module*>>;

ParameterVector get_params(const ModuleGroup& group);
/// Copies values into the group's tensors; names and shapes must match exactly.
void set_params(const ModuleGroup& group, const ParameterVector& params);

}  // namespace dasc
