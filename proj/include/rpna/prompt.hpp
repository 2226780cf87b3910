#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpna/corpus.hpp"

namespace rpna {

enum class ConditionKind { RolePlay, Baseline, Random };

std::string_view to_string(ConditionKind kind);
ConditionKind parse_condition_kind(std::string_view text);

struct PromptCondition {
  ConditionKind kind = ConditionKind::RolePlay;
  std::string name;
  std::string preamble;
  std::string instruction;

  bool operator==(const PromptCondition&) const = default;
};

struct RenderedPrompt {
  std::string condition_name;
  std::string item_id;
  std::string text;
};

inline constexpr std::string_view kBaselineInstruction =
    "Please provide the most appropriate answer to the following medical question.";
inline constexpr std::string_view kRoleInstruction = "Please answer the question.";
inline constexpr std::string_view kRandomPreamble = "This is a sentence.";
inline constexpr std::string_view kOutputConstraint = "Answer with the option letter only.";

/// Default conditions in fixed order: seven clinical roles, the five-step
/// seniority ladder, then Baseline and Random.
std::vector<PromptCondition> builtin_conditions();

/// Throws UsageError if a condition breaks its kind's invariants or names repeat.
void validate_conditions(std::span<const PromptCondition> conditions);

/// Reads conditions from a JSON array or line-delimited records with fields
/// name, kind, preamble, instruction.
std::vector<PromptCondition> load_conditions(const std::filesystem::path& path);

/// Picks conditions by name, in the order given. Throws UsageError on unknown names.
std::vector<PromptCondition> select_conditions(std::span<const PromptCondition> available,
                                               std::span<const std::string> names);

/// Question text followed by one "X. option" line per option.
std::string question_block(const QAItem& item);

/// preamble, blank line, instruction, blank line, question block, output constraint.
RenderedPrompt render_prompt(const PromptCondition& condition, const QAItem& item);

}  // namespace rpna
