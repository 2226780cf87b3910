#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rpna {

/// Per-layer activations for one prompt, shape L x T x d, stored layer-major
/// then token-major. Layers are addressed 1..L (post-block outputs).
class HiddenStates {
 public:
  HiddenStates() = default;
  HiddenStates(int layers, int tokens, int dims);
  /// Takes ownership of `values`; throws ShapeError if the size disagrees
  /// with L*T*d and NonFiniteError on NaN/Inf.
  HiddenStates(int layers, int tokens, int dims, std::vector<float> values);

  int layers() const noexcept { return layers_; }
  int tokens() const noexcept { return tokens_; }
  int dims() const noexcept { return dims_; }
  bool empty() const noexcept { return values_.empty(); }

  float at(int layer, int token, int dim) const;
  std::span<const float> row(int layer, int token) const;
  std::span<float> row(int layer, int token);
  std::span<const float> values() const noexcept { return values_; }

  bool operator==(const HiddenStates&) const = default;

 private:
  std::size_t offset(int layer, int token) const;

  int layers_ = 0;
  int tokens_ = 0;
  int dims_ = 0;
  std::vector<float> values_;
};

/// Activation-exchange encoding: "RPNA", u32 version 1, u32 L, T, d, then
/// L*T*d float32, all little-endian.
std::vector<std::uint8_t> encode_states(const HiddenStates& states);
HiddenStates decode_states(std::span<const std::uint8_t> bytes);

void write_states(const HiddenStates& states, const std::filesystem::path& path);
HiddenStates read_states(const std::filesystem::path& path);

}  // namespace rpna
