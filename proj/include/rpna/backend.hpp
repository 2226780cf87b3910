#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "rpna/plan.hpp"
#include "rpna/states.hpp"

namespace rpna {

struct BackendDescriptor {
  std::string name;
  int layers = 0;
  int dims = 0;
  int max_tokens = 0;

  bool operator==(const BackendDescriptor&) const = default;
};

struct GenerationResult {
  std::string text;
  /// Prefill activations over the prompt tokens; present iff requested.
  std::optional<HiddenStates> prompt_states;
  int token_count = 0;

  bool operator==(const GenerationResult&) const = default;
};

/// A model session. Decoding is greedy, so equal inputs give equal outputs.
/// One generate() call at a time per instance; use separate instances for
/// parallel work.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  /// `plan`, when given, zeroes its dims at its layers for every prompt and
  /// generated position. An empty plan behaves exactly like no plan.
  virtual GenerationResult generate(std::string_view prompt, bool capture_states,
                                    const AblationPlan* plan = nullptr) = 0;
};

/// Throws ShapeMismatchError unless `states` has the descriptor's L and d.
void check_states_shape(const HiddenStates& states, const BackendDescriptor& descriptor);

}  // namespace rpna
