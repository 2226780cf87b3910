#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rpna {

/// Cognitive level labels a corpus may carry per item. Assigned upstream; never inferred here.
enum class BloomLevel { Remembering, Understanding, Applying, Analyzing, Evaluating, Creating };

std::string_view to_string(BloomLevel level);
std::optional<BloomLevel> parse_bloom_level(std::string_view text);

inline constexpr int kMinOptions = 2;
inline constexpr int kMaxOptions = 26;

struct QAItem {
  std::string id;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  std::optional<BloomLevel> bloom_level;
  std::optional<std::string> source;

  int n_options() const noexcept { return static_cast<int>(options.size()); }
  bool operator==(const QAItem&) const = default;
};

struct Corpus {
  std::string name;
  std::vector<QAItem> items;

  std::size_t size() const noexcept { return items.size(); }
  bool operator==(const Corpus&) const = default;
};

/// Reads a line-delimited JSON corpus. Blank lines are skipped; every other
/// line must be one record. Throws CorpusError naming the offending line.
Corpus load_corpus(const std::filesystem::path& path,
                   std::optional<int> n_options_expected = std::nullopt);

/// Same as load_corpus but from an in-memory buffer.
Corpus parse_corpus(std::string_view text, std::string name,
                    std::optional<int> n_options_expected = std::nullopt);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

/// Checks the QAItem invariants (option count, answer range, non-empty texts).
/// Throws CorpusError with `line` on violation.
void validate_item(const QAItem& item, std::size_t line = 0);

/// Option letter for an index: 0 -> 'A'.
char option_letter(int index);

/// Extracts the chosen option from free-text model output.
///
/// Rules are tried in order and the first in-range hit wins:
///   1. "answer is <L>" or "answer: <L>" (phrase case-insensitive)
///   2. a parenthesized or bracketed letter, "(<L>)" or "[<L>]"
///   3. a standalone letter at the start of the text
///   4. the last standalone letter anywhere in the text
/// A standalone letter is an uppercase A..Z with no letter or digit on either
/// side. Letters at or beyond `n_options` never match.
std::optional<int> extract_choice(std::string_view text, int n_options);

}  // namespace rpna
