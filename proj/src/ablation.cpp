#include "rpna/ablation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "rpna/error.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace {

std::vector<int> draw_dims(int count, int dims, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<int> pool(static_cast<std::size_t>(dims));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(dims - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  std::vector<int> chosen(pool.begin(), pool.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

AblationPlan plan_from_set(const NeuronSet& set) {
  return {set.entries, PlanProvenance::role_diff(set.source_condition)};
}

AblationPlan cross_plan(const NeuronSet& source_set, const std::string& target_condition) {
  return {source_set.entries, PlanProvenance::cross_role(source_set.source_condition, target_condition)};
}

AblationPlan random_plan(const std::vector<int>& layers, int per_layer_count, int dims,
                         std::uint64_t seed) {
  if (dims < 1) throw UsageError("random_plan: width must be positive");
  if (per_layer_count < 0 || per_layer_count > dims) {
    throw UsageError("random_plan: count " + std::to_string(per_layer_count) +
                     " exceeds width " + std::to_string(dims));
  }
  AblationPlan plan;
  plan.provenance = PlanProvenance::random(seed);
  for (int layer : layers) {
    if (layer < 1) throw UsageError("random_plan: layers are 1-based");
    if (plan.entries.count(layer)) throw UsageError("random_plan: layer listed twice");
    if (per_layer_count == 0) continue;
    plan.entries[layer] = draw_dims(per_layer_count, dims, derive_seed(seed, static_cast<std::uint64_t>(layer)));
  }
  return plan;
}

AblationPlan matched_random_plan(const AblationPlan& reference, int dims, std::uint64_t seed) {
  AblationPlan plan;
  plan.provenance = PlanProvenance::random(seed);
  for (const auto& [layer, list] : reference.entries) {
    const int count = static_cast<int>(list.size());
    if (count > dims) throw UsageError("matched_random_plan: count exceeds width");
    plan.entries[layer] = draw_dims(count, dims, derive_seed(seed, static_cast<std::uint64_t>(layer)));
  }
  return plan;
}

void validate_grid(const SweepGrid& grid) {
  if (grid.top_layers.empty() || grid.fractions.empty()) throw UsageError("sweep grid axis is empty");
  for (std::size_t i = 1; i < grid.top_layers.size(); ++i) {
    if (grid.top_layers[i] <= grid.top_layers[i - 1]) {
      throw UsageError("sweep layer counts must be strictly ascending");
    }
  }
  for (std::size_t i = 1; i < grid.fractions.size(); ++i) {
    if (grid.fractions[i] <= grid.fractions[i - 1]) {
      throw UsageError("sweep fractions must be strictly ascending");
    }
  }
}

std::vector<SweepCell> run_sweep(const SweepGrid& grid, const DeltaProfile& profile,
                                 const PlanEvaluator& evaluate, const std::string& condition_name) {
  validate_grid(grid);
  std::vector<SweepCell> table;
  for (int k : grid.top_layers) {
    for (double r : grid.fractions) {
      SweepCell cell;
      cell.top_layers = k;
      cell.fraction = r;
      cell.plan = plan_from_set(select_neurons(profile, k, r, condition_name));
      try {
        cell.accuracy = evaluate(cell.plan);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "sweep cell (K=" << k << ", r=" << r << ") failed: " << e.what();
        throw Error(e.kind(), msg.str());
      } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "sweep cell (K=" << k << ", r=" << r << ") failed: " << e.what();
        throw Error(ErrorKind::Internal, msg.str());
      }
      table.push_back(std::move(cell));
    }
  }
  return table;
}

}  // namespace rpna
