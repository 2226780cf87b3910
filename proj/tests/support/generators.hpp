#pragma once

// Hand-rolled generators for property tests. Each draws from its own
// std::mt19937_64 so the library's splitmix64 is never its own oracle.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rpna/salience.hpp"
#include "rpna/states.hpp"
#include "rpna/stats.hpp"

namespace gen {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int integer(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline rpna::HiddenStates hidden_states(Rng& rng, int layers, int tokens, int dims,
                                        float scale = 4.0f) {
  std::vector<float> v(static_cast<std::size_t>(layers) * tokens * dims);
  std::normal_distribution<float> normal(0.0f, scale);
  for (auto& x : v) x = normal(rng);
  return rpna::HiddenStates(layers, tokens, dims, std::move(v));
}

inline rpna::HiddenStates hidden_states(Rng& rng) {
  return hidden_states(rng, integer(rng, 1, 6), integer(rng, 1, 12), integer(rng, 1, 16));
}

inline Eigen::MatrixXd matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline Eigen::MatrixXd orthogonal(Rng& rng, int n) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(matrix(rng, n, n));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

/// Probability vector, occasionally with exact zeros.
inline std::vector<double> probabilities(Rng& rng, int n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& x : p) {
    x = integer(rng, 0, 4) == 0 ? 0.0 : uniform(rng, 0.0, 1.0);
    total += x;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

/// Non-negative profile; small integer values make ties common.
inline rpna::DeltaProfile profile(Rng& rng, int layers, int dims, bool ties) {
  rpna::LayerDeltas d(static_cast<std::size_t>(layers), std::vector<double>(static_cast<std::size_t>(dims)));
  for (auto& row : d) {
    for (auto& x : row) x = ties ? static_cast<double>(integer(rng, 0, 3)) : uniform(rng, 0.0, 2.0);
  }
  return rpna::accumulate_profile(std::vector<rpna::LayerDeltas>{d});
}

inline std::vector<std::vector<bool>> binary_table(Rng& rng, int rows, int cols) {
  std::vector<std::vector<bool>> t(static_cast<std::size_t>(rows), std::vector<bool>(static_cast<std::size_t>(cols)));
  for (auto& row : t) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = integer(rng, 0, 1) == 1;
  }
  return t;
}

inline rpna::RunRecord run_record(const std::string& condition, const std::vector<bool>& correct) {
  rpna::RunRecord run{condition, std::nullopt, {}};
  for (std::size_t i = 0; i < correct.size(); ++i) {
    run.outcomes.push_back({"q" + std::to_string(i), correct[i] ? 0 : 1, correct[i]});
  }
  return run;
}

inline std::vector<bool> bits(Rng& rng, int n, double p_true = 0.5) {
  std::vector<bool> b(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = uniform(rng, 0.0, 1.0) < p_true;
  return b;
}

}  // namespace gen
