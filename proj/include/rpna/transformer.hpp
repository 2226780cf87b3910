#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "rpna/backend.hpp"

namespace rpna {

/// Shape of the byte-level reference transformer.
struct ModelConfig {
  int vocab = 259;  // 256 byte values + BOS, EOS, PAD
  int layers = 4;
  int dims = 64;
  int heads = 4;
  int ff = 128;
  int context = 512;
  int max_tokens = 16;

  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kPad = 258;

  bool operator==(const ModelConfig&) const = default;
};

/// Pre-norm decoder-only transformer with seeded weights.
///
/// Weights come from one splitmix64 stream, each drawn as uniform(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)), row-major, in this order:
///   token embedding (vocab x d), position embedding (context x d),
///   then per block: Wq, Wk, Wv, Wo (d x d), W_up (d x ff), W_down (ff x d),
///   and finally the unembedding (d x vocab).
/// Layer-norm gains are 1, all biases 0.
class MiniTransformer {
 public:
  MiniTransformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  struct Output {
    std::vector<int> tokens;  // generated, excluding EOS
    std::optional<HiddenStates> states;
  };

  /// Prefills BOS + prompt bytes, then decodes greedily for up to
  /// `max_new_tokens`. The plan is assumed validated.
  Output run(std::string_view prompt, bool capture, const AblationPlan* plan,
             int max_new_tokens) const;

  /// Raw parameter buffer in draw order (for reproducibility checks).
  const std::vector<float>& parameters() const noexcept { return params_; }

 private:
  struct Block {
    const float* wq;
    const float* wk;
    const float* wv;
    const float* wo;
    const float* up;
    const float* down;
  };

  ModelConfig config_;
  std::vector<float> params_;
  const float* token_embedding_ = nullptr;
  const float* position_embedding_ = nullptr;
  std::vector<Block> blocks_;
  const float* unembedding_ = nullptr;
};

/// Backend over a MiniTransformer. Hidden state for layer l is the residual
/// stream after block l; captured states cover prompt bytes only (not BOS).
class ReferenceBackend final : public Backend {
 public:
  ReferenceBackend(std::uint64_t seed, const ModelConfig& config = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GenerationResult generate(std::string_view prompt, bool capture_states,
                            const AblationPlan* plan = nullptr) override;

  const MiniTransformer& model() const noexcept { return model_; }

 private:
  MiniTransformer model_;
  BackendDescriptor descriptor_;
};

std::unique_ptr<Backend> make_reference_backend(std::uint64_t seed, const ModelConfig& config = {});

}  // namespace rpna
