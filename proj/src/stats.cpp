#include "rpna/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rpna/error.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace {

void check_paired(const RunRecord& a, const RunRecord& b) {
  if (a.outcomes.size() != b.outcomes.size()) {
    throw ShapeError("runs '" + a.condition + "' and '" + b.condition + "' differ in item count");
  }
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    if (a.outcomes[i].item_id != b.outcomes[i].item_id) {
      throw ShapeError("runs differ at position " + std::to_string(i) + ": '" +
                       a.outcomes[i].item_id + "' vs '" + b.outcomes[i].item_id + "'");
    }
  }
}

std::string run_name(const RunRecord& run) {
  return run.ablation ? run.condition + " [" + *run.ablation + "]" : run.condition;
}

}  // namespace

double accuracy(const RunRecord& run) {
  if (run.outcomes.empty()) throw DataError("accuracy of an empty run");
  const auto correct = std::count_if(run.outcomes.begin(), run.outcomes.end(),
                                     [](const Outcome& o) { return o.correct; });
  return static_cast<double>(correct) / static_cast<double>(run.outcomes.size());
}

std::size_t unparsed_count(const RunRecord& run) {
  return static_cast<std::size_t>(std::count_if(
      run.outcomes.begin(), run.outcomes.end(), [](const Outcome& o) { return !o.choice; }));
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

DeltaInterval paired_delta_ci(const RunRecord& a, const RunRecord& b, int n_boot,
                              std::uint64_t seed) {
  check_paired(a, b);
  if (a.outcomes.empty()) throw DataError("bootstrap over an empty run");
  if (n_boot < 1000) throw UsageError("bootstrap needs at least 1000 replicates");

  const std::size_t n = a.outcomes.size();
  std::vector<int> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = int{a.outcomes[i].correct} - int{b.outcomes[i].correct};
  }
  const auto total = std::accumulate(diff.begin(), diff.end(), 0L);

  std::vector<double> deltas(static_cast<std::size_t>(n_boot));
  for (int r = 0; r < n_boot; ++r) {
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    long sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += diff[rng.below(n)];
    deltas[static_cast<std::size_t>(r)] = static_cast<double>(sum) / static_cast<double>(n);
  }
  std::sort(deltas.begin(), deltas.end());
  return {static_cast<double>(total) / static_cast<double>(n), quantile_sorted(deltas, 0.025),
          quantile_sorted(deltas, 0.975)};
}

TestResult cochran_q(const std::vector<std::vector<bool>>& outcomes) {
  if (outcomes.empty()) throw DataError("Cochran's Q needs at least one subject");
  const std::size_t k = outcomes.front().size();
  if (k < 2) throw UsageError("Cochran's Q needs at least two conditions");

  std::vector<double> col(k, 0.0);
  double sum_r = 0.0, sum_r2 = 0.0;
  for (const auto& row : outcomes) {
    if (row.size() != k) throw ShapeError("Cochran's Q: ragged outcome matrix");
    double r = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j]) {
        col[j] += 1.0;
        r += 1.0;
      }
    }
    sum_r += r;
    sum_r2 += r * r;
  }
  const double kd = static_cast<double>(k);
  double sum_c2 = 0.0;
  for (double c : col) sum_c2 += c * c;

  TestResult result{0.0, static_cast<int>(k - 1), 1.0, "cochran-q"};
  const double denom = kd * sum_r - sum_r2;
  if (denom == 0.0) return result;
  result.statistic = (kd - 1.0) * (kd * sum_c2 - sum_r * sum_r) / denom;
  result.p_value = chi2_survival(result.statistic, *result.df);
  return result;
}

TestResult mcnemar_from_counts(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  if (n == 0) return {0.0, std::nullopt, 1.0, "mcnemar-exact"};
  if (n < 25) {
    const std::size_t m = std::min(b, c);
    double tail = 0.0;
    double coef = 1.0;  // C(n, i)
    for (std::size_t i = 0; i <= m; ++i) {
      if (i > 0) coef = coef * static_cast<double>(n - i + 1) / static_cast<double>(i);
      tail += coef;
    }
    tail = std::ldexp(tail, -static_cast<int>(n));
    return {static_cast<double>(m), std::nullopt, std::min(1.0, 2.0 * tail), "mcnemar-exact"};
  }
  const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  const double stat = diff * diff / static_cast<double>(n);
  return {stat, 1, chi2_survival(stat, 1), "mcnemar-chi2-cc"};
}

TestResult mcnemar(std::span<const std::pair<bool, bool>> pairs) {
  std::size_t b = 0, c = 0;
  for (const auto& [ca, cb] : pairs) {
    if (ca && !cb) ++b;
    if (!ca && cb) ++c;
  }
  return mcnemar_from_counts(b, c);
}

std::vector<double> holm(std::span<const double> p_values) {
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("p-value outside [0, 1]");
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double scaled = std::min(1.0, static_cast<double>(m - j) * p_values[order[j]]);
    running = std::max(running, scaled);
    adjusted[order[j]] = running;
  }
  return adjusted;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0)) throw UsageError("incomplete gamma needs a > 0");
  if (x <= 0.0) return 1.0;
  constexpr double eps = 1e-16;
  constexpr int max_iter = 1000;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);

  if (x < a + 1.0) {
    double ap = a, del = 1.0 / a, sum = del;
    for (int n = 0; n < max_iter; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * eps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }

  constexpr double tiny = std::numeric_limits<double>::min() / eps;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < max_iter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

double chi2_survival(double x, int df) {
  if (df < 1) throw UsageError("chi-square needs df >= 1");
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

std::vector<Comparison> compare_runs(std::span<const RunRecord> runs) {
  std::vector<Comparison> out;
  if (runs.size() < 2) return out;
  for (std::size_t j = 1; j < runs.size(); ++j) check_paired(runs[0], runs[j]);

  const std::size_t n = runs[0].outcomes.size();
  std::vector<std::vector<bool>> matrix(n, std::vector<bool>(runs.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < runs.size(); ++j) matrix[i][j] = runs[j].outcomes[i].correct;
  }
  out.push_back({"all conditions", cochran_q(matrix), std::nullopt});

  std::vector<double> raw;
  for (std::size_t x = 0; x < runs.size(); ++x) {
    for (std::size_t y = x + 1; y < runs.size(); ++y) {
      std::vector<std::pair<bool, bool>> pairs(n);
      for (std::size_t i = 0; i < n; ++i) {
        pairs[i] = {runs[x].outcomes[i].correct, runs[y].outcomes[i].correct};
      }
      out.push_back({run_name(runs[x]) + " vs " + run_name(runs[y]), mcnemar(pairs), std::nullopt});
      raw.push_back(out.back().result.p_value);
    }
  }
  const auto adjusted = holm(raw);
  for (std::size_t i = 0; i < adjusted.size(); ++i) out[i + 1].p_holm = adjusted[i];
  return out;
}

}  // namespace rpna
