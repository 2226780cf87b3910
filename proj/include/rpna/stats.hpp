#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rpna {

struct Outcome {
  std::string item_id;
  std::optional<int> choice;  // absent when the answer could not be parsed
  bool correct = false;
};

/// Scored answers of one (condition, ablation) cell, in corpus order.
struct RunRecord {
  std::string condition;
  std::optional<std::string> ablation;  // plan provenance tag
  std::vector<Outcome> outcomes;
};

struct TestResult {
  double statistic = 0.0;
  std::optional<int> df;  // set only for chi-square based results
  double p_value = 1.0;
  std::string method;
};

/// Correct / total. Unparsed answers count as wrong. Throws DataError if empty.
double accuracy(const RunRecord& run);
std::size_t unparsed_count(const RunRecord& run);

struct DeltaInterval {
  double delta = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

constexpr int kDefaultBootstrap = 10000;

/// accuracy(a) - accuracy(b) with a 95% percentile bootstrap interval.
/// Replicate r draws n item indices from SplitMix64(derive_seed(seed, r)).
/// Throws ShapeError if the runs cover different items.
DeltaInterval paired_delta_ci(const RunRecord& a, const RunRecord& b,
                              int n_boot = kDefaultBootstrap, std::uint64_t seed = 0);

/// Linear-interpolated quantile (type 7) of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

/// Rows are subjects, columns are conditions.
TestResult cochran_q(const std::vector<std::vector<bool>>& outcomes);

/// Paired binary outcomes; exact binomial below 25 discordant pairs,
/// continuity-corrected chi-square otherwise.
TestResult mcnemar(std::span<const std::pair<bool, bool>> pairs);
TestResult mcnemar_from_counts(std::size_t b, std::size_t c);

/// Holm step-down adjustment, returned in input order.
std::vector<double> holm(std::span<const double> p_values);

/// Regularized upper incomplete gamma Q(a, x): power series below x = a + 1,
/// Lentz continued fraction above.
double regularized_gamma_q(double a, double x);
double chi2_survival(double x, int df);

struct Comparison {
  std::string name;
  TestResult result;
  std::optional<double> p_holm;
};

/// Cochran's Q over all runs, then pairwise McNemar tests with Holm-adjusted
/// p-values. Runs must cover the same items.
std::vector<Comparison> compare_runs(std::span<const RunRecord> runs);

}  // namespace rpna
