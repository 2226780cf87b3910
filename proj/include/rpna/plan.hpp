#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rpna {

/// layer (1-based) -> sorted, unique dim indices.
using LayerDims = std::map<int, std::vector<int>>;

struct PlanProvenance {
  enum class Kind { Identity, RoleDiff, Random, CrossRole };

  Kind kind = Kind::Identity;
  std::string condition;  // RoleDiff: the role; CrossRole: the source role
  std::string target;     // CrossRole only
  std::uint64_t seed = 0; // Random only

  static PlanProvenance identity() { return {}; }
  static PlanProvenance role_diff(std::string condition) {
    return {Kind::RoleDiff, std::move(condition), {}, 0};
  }
  static PlanProvenance random(std::uint64_t seed) { return {Kind::Random, {}, {}, seed}; }
  static PlanProvenance cross_role(std::string source, std::string target) {
    return {Kind::CrossRole, std::move(source), std::move(target), 0};
  }

  /// Short human-readable tag, e.g. "role_diff(Resident)".
  std::string tag() const;

  bool operator==(const PlanProvenance&) const = default;
};

/// Which hidden dims to zero during the forward pass, at every token position.
struct AblationPlan {
  LayerDims entries;
  PlanProvenance provenance;

  bool is_identity() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept;
  bool masks(int layer, int dim) const;

  bool operator==(const AblationPlan&) const = default;
};

/// Throws PlanError unless every layer is in [1, layers], every dim in
/// [0, dims), and each layer's dims are sorted and unique.
void validate_plan(const AblationPlan& plan, int layers, int dims);

/// Sorts and de-duplicates each layer's dims; drops empty layers.
LayerDims normalize_layer_dims(LayerDims entries);

std::string plan_to_json(const AblationPlan& plan);
AblationPlan plan_from_json(std::string_view text);
void write_plan(const AblationPlan& plan, const std::filesystem::path& path);
AblationPlan read_plan(const std::filesystem::path& path);

}  // namespace rpna
