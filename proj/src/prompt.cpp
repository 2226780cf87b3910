#include "rpna/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rpna/error.hpp"

namespace rpna {

namespace {

PromptCondition role(std::string name, std::string preamble) {
  return {ConditionKind::RolePlay, std::move(name), std::move(preamble),
          std::string(kRoleInstruction)};
}

PromptCondition condition_from_json(const nlohmann::json& record) {
  if (!record.is_object()) throw DataError("condition record is not an object");
  PromptCondition c;
  try {
    c.name = record.at("name").get<std::string>();
    c.kind = parse_condition_kind(record.at("kind").get<std::string>());
    c.preamble = record.value("preamble", std::string());
    c.instruction = record.value("instruction", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad condition record: ") + e.what());
  }
  return c;
}

}  // namespace

std::string_view to_string(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::RolePlay: return "role_play";
    case ConditionKind::Baseline: return "baseline";
    case ConditionKind::Random: return "random";
  }
  return "role_play";
}

ConditionKind parse_condition_kind(std::string_view text) {
  if (text == "role_play" || text == "RolePlay" || text == "role") return ConditionKind::RolePlay;
  if (text == "baseline" || text == "Baseline") return ConditionKind::Baseline;
  if (text == "random" || text == "Random") return ConditionKind::Random;
  throw UsageError("unknown condition kind '" + std::string(text) + "'");
}

std::vector<PromptCondition> builtin_conditions() {
  // Preamble texts are editable defaults: background plus behavioural guidance.
  std::vector<PromptCondition> out = {
      role("Medical Student",
           "You are a Medical Student in your clinical years. You know the core textbooks well "
           "but have limited bedside experience. Reason step by step from basic science and "
           "check each option against what you have studied."),
      role("Resident",
           "You are a Resident physician working on the hospital wards. You manage patients "
           "daily under supervision. Focus on the most likely diagnosis and the standard "
           "next step in management."),
      role("Expert Doctor",
           "You are an Expert Doctor with decades of clinical practice. You recognise "
           "patterns quickly and weigh evidence critically. Give the answer an experienced "
           "specialist would defend."),
      role("American Doctor",
           "You are an American Doctor trained under US board standards. You follow current "
           "US guidelines and licensing-exam conventions. Answer as you would on the USMLE."),
      role("China Doctor",
           "You are a China Doctor practising in a Chinese tertiary hospital. You follow "
           "Chinese clinical guidelines and national exam conventions. Answer as a licensed "
           "physician in China would."),
      role("Emergency Doctor",
           "You are an Emergency Doctor in a busy emergency department. You prioritise "
           "life-threatening conditions and rapid stabilisation. Choose the action that "
           "matters most right now."),
      role("Surgeon",
           "You are a Surgeon with extensive operative experience. You think in terms of "
           "anatomy, surgical indications and perioperative risk. Decide as a surgeon "
           "would."),
      role("Attending Physician",
           "You are an Attending Physician responsible for a clinical team. You supervise "
           "residents and make final ward decisions. Give the answer you would teach on "
           "rounds."),
      role("Chief Physician",
           "You are a Chief Physician leading a hospital department. You handle the most "
           "difficult referrals and set departmental practice. Answer with senior clinical "
           "judgement."),
      role("Associate Chief Physician",
           "You are an Associate Chief Physician with long specialist experience. You "
           "consult on complex cases across the department. Weigh the options as a senior "
           "consultant."),
      role("Medical Expert",
           "You are a Medical Expert recognised for clinical research and teaching. You "
           "integrate guidelines with current evidence. Select the best-supported answer."),
      role("Senior Medical Expert",
           "You are a Senior Medical Expert who advises national guideline committees. You "
           "have seen every presentation many times. Give the definitive expert answer."),
      {ConditionKind::Baseline, "Baseline", "", std::string(kBaselineInstruction)},
      {ConditionKind::Random, "Random", std::string(kRandomPreamble),
       std::string(kRoleInstruction)},
  };
  return out;
}

void validate_conditions(std::span<const PromptCondition> conditions) {
  std::unordered_set<std::string> names;
  for (const auto& c : conditions) {
    if (c.name.empty()) throw UsageError("condition with empty name");
    if (!names.insert(c.name).second) throw UsageError("duplicate condition name '" + c.name + "'");
    if (c.instruction.empty()) throw UsageError("condition '" + c.name + "' has no instruction");
    switch (c.kind) {
      case ConditionKind::Baseline:
        if (!c.preamble.empty()) {
          throw UsageError("baseline condition '" + c.name + "' must have an empty preamble");
        }
        break;
      case ConditionKind::RolePlay:
      case ConditionKind::Random:
        if (c.preamble.empty()) {
          throw UsageError("condition '" + c.name + "' requires a preamble");
        }
        break;
    }
  }
}

std::vector<PromptCondition> load_conditions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open conditions file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<PromptCondition> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(std::string("malformed conditions file: ") + e.what());
    }
    for (const auto& record : doc) out.push_back(condition_from_json(record));
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back(condition_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("malformed condition record: ") + e.what());
      }
    }
  }
  if (out.empty()) throw DataError("conditions file " + path.string() + " is empty");
  validate_conditions(out);
  return out;
}

std::vector<PromptCondition> select_conditions(std::span<const PromptCondition> available,
                                               std::span<const std::string> names) {
  std::vector<PromptCondition> out;
  for (const auto& name : names) {
    auto it = std::find_if(available.begin(), available.end(),
                           [&](const PromptCondition& c) { return c.name == name; });
    if (it == available.end()) throw UsageError("unknown condition '" + name + "'");
    out.push_back(*it);
  }
  validate_conditions(out);
  return out;
}

std::string question_block(const QAItem& item) {
  std::string block = item.question;
  for (int i = 0; i < item.n_options(); ++i) {
    block += '\n';
    block += option_letter(i);
    block += ". ";
    block += item.options[static_cast<std::size_t>(i)];
  }
  return block;
}

RenderedPrompt render_prompt(const PromptCondition& condition, const QAItem& item) {
  std::string text;
  if (!condition.preamble.empty()) {
    text += condition.preamble;
    text += "\n\n";
  }
  text += condition.instruction;
  text += "\n\n";
  text += question_block(item);
  text += '\n';
  text += kOutputConstraint;
  return {condition.name, item.id, std::move(text)};
}

}  // namespace rpna
