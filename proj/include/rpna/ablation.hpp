#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rpna/plan.hpp"
#include "rpna/salience.hpp"

namespace rpna {

/// Within-role masking plan: the set's entries, provenance RoleDiff.
AblationPlan plan_from_set(const NeuronSet& set);

/// Source role's neurons masked while the target role is prompted.
AblationPlan cross_plan(const NeuronSet& source_set, const std::string& target_condition);

/// `per_layer_count` dims drawn without replacement in each listed layer,
/// using an independent splitmix64 substream per layer.
AblationPlan random_plan(const std::vector<int>& layers, int per_layer_count, int dims,
                         std::uint64_t seed);

/// Random control for `reference`: same layers, same per-layer counts.
AblationPlan matched_random_plan(const AblationPlan& reference, int dims, std::uint64_t seed);

/// Layer-count by per-layer-fraction grid for dose-response sweeps.
struct SweepGrid {
  std::vector<int> top_layers{4, 6, 8};
  std::vector<double> fractions{0.03, 0.05, 0.10};
};

/// Throws UsageError unless both axes are non-empty and strictly ascending.
void validate_grid(const SweepGrid& grid);

struct SweepCell {
  int top_layers = 0;
  double fraction = 0.0;
  double accuracy = 0.0;  // after masking
  AblationPlan plan;
};

/// Maps a plan to the accuracy obtained under it.
using PlanEvaluator = std::function<double(const AblationPlan&)>;

/// Evaluates every grid cell in (K ascending, r ascending) order. A failing
/// evaluation is rethrown with the cell named.
std::vector<SweepCell> run_sweep(const SweepGrid& grid, const DeltaProfile& profile,
                                 const PlanEvaluator& evaluate,
                                 const std::string& condition_name = {});

}  // namespace rpna
