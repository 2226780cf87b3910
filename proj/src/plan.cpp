#include "rpna/plan.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "rpna/error.hpp"

namespace rpna {

std::string PlanProvenance::tag() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::RoleDiff: return "role_diff(" + condition + ")";
    case Kind::Random: return "random(" + std::to_string(seed) + ")";
    case Kind::CrossRole: return "cross_role(" + condition + "->" + target + ")";
  }
  return "identity";
}

std::size_t AblationPlan::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [layer, dims] : entries) n += dims.size();
  return n;
}

bool AblationPlan::masks(int layer, int dim) const {
  auto it = entries.find(layer);
  return it != entries.end() && std::binary_search(it->second.begin(), it->second.end(), dim);
}

void validate_plan(const AblationPlan& plan, int layers, int dims) {
  for (const auto& [layer, list] : plan.entries) {
    if (layer < 1 || layer > layers) {
      throw PlanError("plan references layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(layers) + "]");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] < 0 || list[i] >= dims) {
        throw PlanError("plan references dim " + std::to_string(list[i]) + " outside [0, " +
                        std::to_string(dims) + ") at layer " + std::to_string(layer));
      }
      if (i > 0 && list[i] <= list[i - 1]) {
        throw PlanError("plan dims at layer " + std::to_string(layer) +
                        " are not sorted and unique");
      }
    }
  }
}

LayerDims normalize_layer_dims(LayerDims entries) {
  for (auto it = entries.begin(); it != entries.end();) {
    auto& dims = it->second;
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    it = dims.empty() ? entries.erase(it) : std::next(it);
  }
  return entries;
}

// ---- json adapters ---------------------------------------------------------

nlohmann::json layer_dims_to_json(const LayerDims& entries) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& [layer, dims] : entries) layers.push_back({{"layer", layer}, {"dims", dims}});
  return layers;
}

LayerDims layer_dims_from_json(const nlohmann::json& layers) {
  if (!layers.is_array()) throw DataError("'layers' must be an array");
  LayerDims entries;
  for (const auto& rec : layers) {
    const int layer = rec.at("layer").get<int>();
    auto dims = rec.at("dims").get<std::vector<int>>();
    if (entries.count(layer)) throw DataError("layer " + std::to_string(layer) + " listed twice");
    entries[layer] = std::move(dims);
  }
  return entries;
}

nlohmann::json provenance_to_json(const PlanProvenance& p) {
  using Kind = PlanProvenance::Kind;
  switch (p.kind) {
    case Kind::Identity: return {{"kind", "identity"}};
    case Kind::RoleDiff: return {{"kind", "role_diff"}, {"condition", p.condition}};
    case Kind::Random: return {{"kind", "random"}, {"seed", p.seed}};
    case Kind::CrossRole:
      return {{"kind", "cross_role"}, {"source", p.condition}, {"target", p.target}};
  }
  return {{"kind", "identity"}};
}

PlanProvenance provenance_from_json(const nlohmann::json& r) {
  const auto kind = r.at("kind").get<std::string>();
  if (kind == "identity") return PlanProvenance::identity();
  if (kind == "role_diff") return PlanProvenance::role_diff(r.at("condition").get<std::string>());
  if (kind == "random") return PlanProvenance::random(r.at("seed").get<std::uint64_t>());
  if (kind == "cross_role") {
    return PlanProvenance::cross_role(r.at("source").get<std::string>(),
                                      r.at("target").get<std::string>());
  }
  throw DataError("unknown plan provenance '" + kind + "'");
}

nlohmann::json plan_to_json_value(const AblationPlan& plan) {
  nlohmann::json out = {{"layers", layer_dims_to_json(plan.entries)},
                        {"provenance", provenance_to_json(plan.provenance)}};
  using Kind = PlanProvenance::Kind;
  if (plan.provenance.kind == Kind::RoleDiff || plan.provenance.kind == Kind::CrossRole) {
    out["condition"] = plan.provenance.condition;
  }
  return out;
}

AblationPlan plan_from_json_value(const nlohmann::json& record) {
  AblationPlan plan;
  try {
    plan.entries = layer_dims_from_json(record.at("layers"));
    if (auto it = record.find("provenance"); it != record.end()) {
      plan.provenance = provenance_from_json(*it);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad plan record: ") + e.what());
  }
  for (const auto& [layer, dims] : plan.entries) {
    if (!std::is_sorted(dims.begin(), dims.end()) ||
        std::adjacent_find(dims.begin(), dims.end()) != dims.end()) {
      throw PlanError("plan dims at layer " + std::to_string(layer) + " are not sorted and unique");
    }
  }
  return plan;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write to " + path.string());
}

std::string dump_json(const nlohmann::json& value, int indent) {
  return value.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---- public string/file API ------------------------------------------------

std::string plan_to_json(const AblationPlan& plan) { return dump_json(plan_to_json_value(plan), 2); }

AblationPlan plan_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed plan: ") + e.what());
  }
  return plan_from_json_value(doc);
}

void write_plan(const AblationPlan& plan, const std::filesystem::path& path) {
  write_text_file(path, plan_to_json(plan) + "\n");
}

AblationPlan read_plan(const std::filesystem::path& path) {
  return plan_from_json(read_text_file(path));
}

}  // namespace rpna
