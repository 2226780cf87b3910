#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rpna/experiment.hpp"

namespace rpna {

/// Shortest round-trip decimal, or fixed `decimals` when given.
std::string format_number(double value, std::optional<int> decimals = std::nullopt);

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(std::string_view text);

/// Header row of labels, then one row per label.
std::string similarity_csv(const SimilarityMatrix& matrix);

/// Writes every table, figure and the summary record for `artifacts` into
/// `out_dir` (created if needed). Sections whose data is absent are skipped.
/// Returns the written paths in a fixed order.
std::vector<std::filesystem::path> emit_report(const RunArtifacts& artifacts,
                                               const std::filesystem::path& out_dir);

}  // namespace rpna
