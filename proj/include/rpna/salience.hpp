#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpna/plan.hpp"
#include "rpna/states.hpp"

namespace rpna {

/// One non-negative d-vector per layer; index 0 is layer 1.
using LayerDeltas = std::vector<std::vector<double>>;

/// Token-mean activations per layer (L x d), the only statistic of a prompt's
/// hidden states that salience and JSD need.
using PooledStates = std::vector<std::vector<double>>;

PooledStates pool_states(const HiddenStates& states);

struct DeltaProfile {
  LayerDeltas per_layer_delta;           // mean over samples of per-sample deltas
  std::vector<double> layer_sensitivity;  // mean of each layer's delta entries
  std::size_t n_samples = 0;

  int layers() const noexcept { return static_cast<int>(per_layer_delta.size()); }
  int dims() const noexcept {
    return per_layer_delta.empty() ? 0 : static_cast<int>(per_layer_delta.front().size());
  }
};

inline constexpr int kDefaultTopLayers = 4;
inline constexpr double kDefaultNeuronFraction = 0.05;

/// Cross-layer role-sensitive neurons: the top-r fraction of dims inside each
/// of the K most sensitive layers.
struct NeuronSet {
  LayerDims entries;
  int top_layers = kDefaultTopLayers;
  double fraction = kDefaultNeuronFraction;
  std::string source_condition;

  std::size_t size() const noexcept;
  bool operator==(const NeuronSet&) const = default;
};

/// |mean_T(role) - mean_T(base)| per layer and dim. Token counts may differ.
/// Throws ShapeError on an L or d mismatch.
LayerDeltas activation_delta(const HiddenStates& role_states, const HiddenStates& base_states);
LayerDeltas activation_delta(const PooledStates& role_pooled, const PooledStates& base_pooled);

/// Folds per-sample deltas in arrival order. Absolute values are taken per
/// sample before averaging.
class ProfileAccumulator {
 public:
  void add(const LayerDeltas& deltas);
  std::size_t count() const noexcept { return count_; }
  /// Throws DataError if nothing was added.
  DeltaProfile finish() const;

 private:
  LayerDeltas sum_;
  std::size_t count_ = 0;
};

DeltaProfile accumulate_profile(std::span<const LayerDeltas> deltas);

/// Mean of each layer's entries.
std::vector<double> layer_sensitivity(const LayerDeltas& deltas);

/// Number of dims selected per layer for fraction r of width d: ceil(r * d).
int neurons_per_layer(double fraction, int dims);

/// Top-K layers by sensitivity, then top ceil(r*d) dims by delta within each;
/// ties go to the lower index in both cases.
NeuronSet select_neurons(const DeltaProfile& profile, int top_layers = kDefaultTopLayers,
                         double fraction = kDefaultNeuronFraction,
                         std::string_view condition_name = {});

std::string neuron_set_to_json(const NeuronSet& set);
NeuronSet neuron_set_from_json(std::string_view text);
void write_neuron_set(const NeuronSet& set, const std::filesystem::path& path);
NeuronSet read_neuron_set(const std::filesystem::path& path);

}  // namespace rpna
