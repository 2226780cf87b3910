#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rpna/backend.hpp"
#include "rpna/corpus.hpp"
#include "rpna/salience.hpp"
#include "rpna/transformer.hpp"

namespace rpna {

/// Positive control with a known causal circuit.
///
/// Captured activations are the reference model's plus a fixed offset on every
/// circuit (layer, dim) at each context token (bytes before the question
/// block). Prompts with longer preambles shift the token mean further, so
/// role/baseline deltas concentrate on the circuit. Multiple-choice prompts are answered by rule:
/// the correct letter, except that masking a fraction f of the circuit flips
/// a deterministic subset of items to a wrong letter. With a corpus attached
/// exactly ceil(f * flip_probability * N) items flip (lowest hash ranks);
/// otherwise an item flips when its hash falls below f * flip_probability.
/// The flipped sets are nested in f, and masking non-circuit dims never
/// changes an answer.
///
/// The correct answer comes from the attached corpus, or else from the
/// synthetic "X + Y" arithmetic template. Other prompts fall through to the
/// reference model's greedy output.
class PlantedBackend final : public Backend {
 public:
  PlantedBackend(std::uint64_t seed, LayerDims circuit, double flip_probability,
                 const ModelConfig& config = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GenerationResult generate(std::string_view prompt, bool capture_states,
                            const AblationPlan* plan = nullptr) override;

  /// Answers and flip ranks for prompts rendered from `corpus` items.
  void attach_corpus(const Corpus& corpus);

  const LayerDims& circuit() const noexcept { return circuit_; }
  std::size_t circuit_size() const noexcept { return circuit_size_; }

  /// Amplitude of the planted signal relative to the reference activations.
  static constexpr float kSignalAmplitude = 16.0f;

 private:
  struct ParsedPrompt {
    std::string block;  // question text + option lines
    std::string question;
    std::vector<std::string> options;
    std::size_t context_bytes = 0;  // prompt bytes before the question block
  };

  static std::optional<ParsedPrompt> parse_multiple_choice(std::string_view prompt);
  std::optional<int> correct_answer(const ParsedPrompt& parsed, std::optional<std::size_t> item) const;
  std::size_t masked_circuit_count(const AblationPlan* plan) const;
  void add_signal(HiddenStates& states, std::size_t context_bytes, const AblationPlan* plan) const;

  std::uint64_t seed_;
  LayerDims circuit_;
  std::size_t circuit_size_ = 0;
  double flip_probability_;
  MiniTransformer model_;
  BackendDescriptor descriptor_;
  // One signed weight per circuit (layer, dim), in circuit order.
  std::vector<float> signal_weights_;

  std::unordered_map<std::string, std::size_t> block_index_;
  std::vector<int> answers_;
  std::vector<std::size_t> flip_rank_;
};

/// Circuit of ceil(fraction * d) seeded-random dims in each listed layer.
LayerDims random_circuit(std::uint64_t seed, const std::vector<int>& layers, double fraction,
                         int dims);

std::unique_ptr<PlantedBackend> make_planted_backend(std::uint64_t seed, const NeuronSet& circuit,
                                                     double flip_probability,
                                                     const ModelConfig& config = {});

}  // namespace rpna
