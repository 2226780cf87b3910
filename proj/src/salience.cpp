#include "rpna/salience.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_io.hpp"
#include "rpna/error.hpp"

namespace rpna {

PooledStates pool_states(const HiddenStates& states) {
  PooledStates pooled(static_cast<std::size_t>(states.layers()),
                      std::vector<double>(static_cast<std::size_t>(states.dims()), 0.0));
  for (int l = 1; l <= states.layers(); ++l) {
    auto& mean = pooled[static_cast<std::size_t>(l - 1)];
    for (int t = 0; t < states.tokens(); ++t) {
      const auto row = states.row(l, t);
      for (std::size_t i = 0; i < row.size(); ++i) mean[i] += row[i];
    }
    for (auto& m : mean) m /= static_cast<double>(states.tokens());
  }
  return pooled;
}

std::size_t NeuronSet::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [layer, dims] : entries) n += dims.size();
  return n;
}

LayerDeltas activation_delta(const PooledStates& role, const PooledStates& base) {
  if (role.size() != base.size()) throw ShapeError("activation_delta: layer counts differ");
  LayerDeltas out(role.size());
  for (std::size_t l = 0; l < role.size(); ++l) {
    if (role[l].size() != base[l].size()) throw ShapeError("activation_delta: widths differ");
    out[l].resize(role[l].size());
    for (std::size_t i = 0; i < role[l].size(); ++i) out[l][i] = std::abs(role[l][i] - base[l][i]);
  }
  return out;
}

LayerDeltas activation_delta(const HiddenStates& role_states, const HiddenStates& base_states) {
  if (role_states.layers() != base_states.layers() || role_states.dims() != base_states.dims()) {
    throw ShapeError("activation_delta: role and baseline states differ in L or d");
  }
  return activation_delta(pool_states(role_states), pool_states(base_states));
}

void ProfileAccumulator::add(const LayerDeltas& deltas) {
  if (deltas.empty()) throw ShapeError("empty delta sample");
  if (count_ == 0) {
    sum_.assign(deltas.size(), std::vector<double>(deltas.front().size(), 0.0));
  }
  if (deltas.size() != sum_.size()) {
    throw ShapeError("delta sample " + std::to_string(count_ + 1) + " changes the layer count");
  }
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    if (deltas[l].size() != sum_[l].size()) {
      throw ShapeError("delta sample " + std::to_string(count_ + 1) + " changes the width");
    }
    for (std::size_t i = 0; i < deltas[l].size(); ++i) sum_[l][i] += deltas[l][i];
  }
  ++count_;
}

DeltaProfile ProfileAccumulator::finish() const {
  if (count_ == 0) throw DataError("cannot build a delta profile from zero samples");
  DeltaProfile profile;
  profile.per_layer_delta = sum_;
  for (auto& layer : profile.per_layer_delta) {
    for (auto& v : layer) v /= static_cast<double>(count_);
  }
  profile.layer_sensitivity = layer_sensitivity(profile.per_layer_delta);
  profile.n_samples = count_;
  return profile;
}

DeltaProfile accumulate_profile(std::span<const LayerDeltas> deltas) {
  ProfileAccumulator acc;
  for (const auto& d : deltas) acc.add(d);
  return acc.finish();
}

std::vector<double> layer_sensitivity(const LayerDeltas& deltas) {
  std::vector<double> s;
  s.reserve(deltas.size());
  for (const auto& layer : deltas) {
    const double total = std::accumulate(layer.begin(), layer.end(), 0.0);
    s.push_back(layer.empty() ? 0.0 : total / static_cast<double>(layer.size()));
  }
  return s;
}

int neurons_per_layer(double fraction, int dims) {
  // The epsilon keeps exact products such as 0.25 * 32 from rounding up.
  return static_cast<int>(std::ceil(fraction * dims - 1e-9));
}

NeuronSet select_neurons(const DeltaProfile& profile, int top_layers, double fraction,
                         std::string_view condition_name) {
  const int L = profile.layers();
  const int d = profile.dims();
  if (L == 0 || d == 0) throw DataError("select_neurons: empty profile");
  if (top_layers < 1 || top_layers > L) {
    throw UsageError("K = " + std::to_string(top_layers) + " outside [1, " + std::to_string(L) + "]");
  }
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw UsageError("neuron fraction r must lie in (0, 1]");
  }
  const int per_layer = neurons_per_layer(fraction, d);
  if (per_layer < 1) throw UsageError("neuron fraction selects zero neurons");

  const auto& s = profile.layer_sensitivity;
  std::vector<int> layers(static_cast<std::size_t>(L));
  std::iota(layers.begin(), layers.end(), 0);
  std::stable_sort(layers.begin(), layers.end(), [&](int a, int b) { return s[a] > s[b]; });

  NeuronSet set;
  set.top_layers = top_layers;
  set.fraction = fraction;
  set.source_condition = std::string(condition_name);
  for (int k = 0; k < top_layers; ++k) {
    const int layer = layers[static_cast<std::size_t>(k)];
    const auto& delta = profile.per_layer_delta[static_cast<std::size_t>(layer)];
    std::vector<int> dims(static_cast<std::size_t>(d));
    std::iota(dims.begin(), dims.end(), 0);
    std::stable_sort(dims.begin(), dims.end(),
                     [&](int a, int b) { return delta[a] > delta[b]; });
    dims.resize(static_cast<std::size_t>(per_layer));
    std::sort(dims.begin(), dims.end());
    set.entries[layer + 1] = std::move(dims);
  }
  return set;
}

std::string neuron_set_to_json(const NeuronSet& set) {
  nlohmann::json out = {{"condition", set.source_condition},
                        {"K", set.top_layers},
                        {"r", set.fraction},
                        {"layers", layer_dims_to_json(set.entries)}};
  return dump_json(out, 2);
}

NeuronSet neuron_set_from_json(std::string_view text) {
  NeuronSet set;
  try {
    const auto doc = nlohmann::json::parse(text);
    set.source_condition = doc.value("condition", std::string());
    set.top_layers = doc.at("K").get<int>();
    set.fraction = doc.at("r").get<double>();
    set.entries = layer_dims_from_json(doc.at("layers"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad neuron set: ") + e.what());
  }
  if (static_cast<int>(set.entries.size()) != set.top_layers) {
    throw DataError("neuron set lists " + std::to_string(set.entries.size()) +
                    " layers but K = " + std::to_string(set.top_layers));
  }
  for (auto& [layer, dims] : set.entries) {
    if (!std::is_sorted(dims.begin(), dims.end()) ||
        std::adjacent_find(dims.begin(), dims.end()) != dims.end()) {
      throw DataError("neuron set dims at layer " + std::to_string(layer) +
                      " are not sorted and unique");
    }
  }
  return set;
}

void write_neuron_set(const NeuronSet& set, const std::filesystem::path& path) {
  write_text_file(path, neuron_set_to_json(set) + "\n");
}

NeuronSet read_neuron_set(const std::filesystem::path& path) {
  return neuron_set_from_json(read_text_file(path));
}

}  // namespace rpna
