#include "rpna/corpus.hpp"

#include <array>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rpna/error.hpp"

namespace rpna {

namespace {

constexpr std::array<std::string_view, 6> kBloomNames = {
    "Remembering", "Understanding", "Applying", "Analyzing", "Evaluating", "Creating"};

const nlohmann::json& require_field(const nlohmann::json& record, const char* field,
                                    std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw CorpusError(line, std::string("missing field '") + field + "'");
  }
  return *it;
}

QAItem parse_record(const nlohmann::json& record, std::size_t line) {
  if (!record.is_object()) throw CorpusError(line, "record is not an object");

  QAItem item;
  const auto& id = require_field(record, "id", line);
  if (!id.is_string()) throw CorpusError(line, "field 'id' must be a string");
  item.id = id.get<std::string>();

  const auto& question = require_field(record, "question", line);
  if (!question.is_string()) throw CorpusError(line, "field 'question' must be a string");
  item.question = question.get<std::string>();

  const auto& options = require_field(record, "options", line);
  if (!options.is_array()) throw CorpusError(line, "field 'options' must be an array");
  for (const auto& opt : options) {
    if (!opt.is_string()) throw CorpusError(line, "field 'options' must hold strings");
    item.options.push_back(opt.get<std::string>());
  }

  const auto& answer = require_field(record, "answer_index", line);
  if (!answer.is_number_integer()) {
    throw CorpusError(line, "field 'answer_index' must be an integer");
  }
  const auto raw = answer.get<long long>();
  if (raw < 0 || raw >= static_cast<long long>(item.options.size())) {
    throw CorpusError(line, "answer index out of range: " + std::to_string(raw));
  }
  item.answer_index = static_cast<int>(raw);

  if (auto it = record.find("bloom_level"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw CorpusError(line, "field 'bloom_level' must be a string");
    item.bloom_level = parse_bloom_level(it->get<std::string>());
    if (!item.bloom_level) {
      throw CorpusError(line, "unknown bloom_level '" + it->get<std::string>() + "'");
    }
  }
  if (auto it = record.find("source"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw CorpusError(line, "field 'source' must be a string");
    item.source = it->get<std::string>();
  }

  validate_item(item, line);
  return item;
}

bool is_alnum(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

// Letter at `pos` must be uppercase, in range and without alphanumeric neighbours.
std::optional<int> standalone_letter(std::string_view text, std::size_t pos, int n_options) {
  const char c = text[pos];
  if (c < 'A' || c > 'Z') return std::nullopt;
  if (pos > 0 && is_alnum(text[pos - 1])) return std::nullopt;
  if (pos + 1 < text.size() && is_alnum(text[pos + 1])) return std::nullopt;
  const int index = c - 'A';
  if (index >= n_options) return std::nullopt;
  return index;
}

std::optional<int> first_capture(const std::regex& pattern, std::string_view text,
                                 int n_options) {
  using It = std::string_view::const_iterator;
  for (std::regex_iterator<It> it(text.begin(), text.end(), pattern), end; it != end; ++it) {
    for (std::size_t group = 1; group < it->size(); ++group) {
      if (!(*it)[group].matched) continue;
      const auto pos = static_cast<std::size_t>((*it)[group].first - text.begin());
      if (auto hit = standalone_letter(text, pos, n_options)) return hit;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(BloomLevel level) {
  return kBloomNames[static_cast<std::size_t>(level)];
}

std::optional<BloomLevel> parse_bloom_level(std::string_view text) {
  for (std::size_t i = 0; i < kBloomNames.size(); ++i) {
    if (kBloomNames[i] == text) return static_cast<BloomLevel>(i);
  }
  return std::nullopt;
}

char option_letter(int index) {
  if (index < 0 || index >= kMaxOptions) throw UsageError("option index out of range");
  return static_cast<char>('A' + index);
}

void validate_item(const QAItem& item, std::size_t line) {
  if (item.id.empty()) throw CorpusError(line, "empty id");
  if (item.question.empty()) throw CorpusError(line, "empty question");
  const int n = item.n_options();
  if (n < kMinOptions || n > kMaxOptions) {
    throw CorpusError(line, "option count " + std::to_string(n) + " outside [2, 26]");
  }
  for (const auto& opt : item.options) {
    if (opt.empty()) throw CorpusError(line, "empty option text");
  }
  if (item.answer_index < 0 || item.answer_index >= n) {
    throw CorpusError(line, "answer index out of range: " + std::to_string(item.answer_index));
  }
}

Corpus parse_corpus(std::string_view text, std::string name,
                    std::optional<int> n_options_expected) {
  Corpus corpus;
  corpus.name = std::move(name);
  std::unordered_set<std::string> seen;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(line_no, std::string("malformed record: ") + e.what());
    }
    QAItem item = parse_record(record, line_no);
    if (n_options_expected && item.n_options() != *n_options_expected) {
      throw CorpusError(line_no, "expected " + std::to_string(*n_options_expected) +
                                     " options, found " + std::to_string(item.n_options()));
    }
    if (!seen.insert(item.id).second) throw CorpusError(line_no, "duplicate id '" + item.id + "'");
    corpus.items.push_back(std::move(item));
  }
  if (corpus.items.empty()) throw CorpusError(0, "corpus '" + corpus.name + "' is empty");
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, std::optional<int> n_options_expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), path.stem().string(), n_options_expected);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& item : corpus.items) {
    nlohmann::json record = {{"id", item.id},
                             {"question", item.question},
                             {"options", item.options},
                             {"answer_index", item.answer_index}};
    if (item.bloom_level) record["bloom_level"] = std::string(to_string(*item.bloom_level));
    if (item.source) record["source"] = *item.source;
    out += record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  out << serialize_corpus(corpus);
}

std::optional<int> extract_choice(std::string_view text, int n_options) {
  if (n_options < kMinOptions || n_options > kMaxOptions) {
    throw UsageError("n_options must lie in [2, 26]");
  }
  static const std::regex answer_phrase(
      R"([Aa][Nn][Ss][Ww][Ee][Rr]\s*(?:[Ii][Ss]\s*|:\s*)\(?([A-Z]))");
  static const std::regex bracketed(R"(\(([A-Z])\)|\[([A-Z])\])");
  static const std::regex leading(R"(^\s*([A-Z]))");

  if (auto hit = first_capture(answer_phrase, text, n_options)) return hit;
  if (auto hit = first_capture(bracketed, text, n_options)) return hit;
  if (auto hit = first_capture(leading, text, n_options)) return hit;

  for (std::size_t pos = text.size(); pos-- > 0;) {
    if (auto hit = standalone_letter(text, pos, n_options)) return hit;
  }
  return std::nullopt;
}

}  // namespace rpna
