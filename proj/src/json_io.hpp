#pragma once

// nlohmann/json adapters shared by the serializing translation units.

#include "json.hpp"
#include "rpna/plan.hpp"

namespace rpna {

nlohmann::json layer_dims_to_json(const LayerDims& entries);
LayerDims layer_dims_from_json(const nlohmann::json& layers);

nlohmann::json provenance_to_json(const PlanProvenance& provenance);
PlanProvenance provenance_from_json(const nlohmann::json& record);

nlohmann::json plan_to_json_value(const AblationPlan& plan);
AblationPlan plan_from_json_value(const nlohmann::json& record);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Compact, key-sorted dump with invalid UTF-8 replaced.
std::string dump_json(const nlohmann::json& value, int indent = -1);

}  // namespace rpna
