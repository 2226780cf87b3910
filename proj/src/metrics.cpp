#include "rpna/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "rpna/error.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace {

double squared_distance(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

double distance(const Matrix& x, Eigen::Index i, Eigen::Index j) {
  return (x.row(i) - x.row(j)).norm();
}

// One term of the JSD sum; commutative in (p, q) by construction.
double jsd_term(double p, double q) {
  const double m = 0.5 * (p + q);
  const double tp = p > 0.0 ? p * std::log2(p / m) : 0.0;
  const double tq = q > 0.0 ? q * std::log2(q / m) : 0.0;
  return 0.5 * (tp + tq);
}

}  // namespace

std::string_view to_string(JsdNorm norm) {
  return norm == JsdNorm::Softmax ? "softmax" : "abs-l1";
}

JsdNorm parse_jsd_norm(std::string_view text) {
  if (text == "softmax") return JsdNorm::Softmax;
  if (text == "abs-l1") return JsdNorm::AbsL1;
  throw UsageError("unknown JSD normalization '" + std::string(text) + "'");
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DataError("distribution is empty");
  double total = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) throw DataError("distribution entries must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("distribution does not sum to 1");
}

std::vector<double> pool_layer(const HiddenStates& states, int layer) {
  if (layer < 1 || layer > states.layers()) {
    throw UsageError("layer " + std::to_string(layer) + " outside [1, " +
                     std::to_string(states.layers()) + "]");
  }
  std::vector<double> mean(static_cast<std::size_t>(states.dims()), 0.0);
  for (int t = 0; t < states.tokens(); ++t) {
    const auto row = states.row(layer, t);
    for (std::size_t i = 0; i < row.size(); ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m /= static_cast<double>(states.tokens());
  return mean;
}

Distribution normalize_pooled(std::span<const double> pooled, JsdNorm norm) {
  if (pooled.empty()) throw DataError("cannot normalize an empty vector");
  std::vector<double> p(pooled.size());
  if (norm == JsdNorm::Softmax) {
    const double max = *std::max_element(pooled.begin(), pooled.end());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::exp(pooled[i] - max);
      total += p[i];
    }
    for (auto& v : p) v /= total;
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::abs(pooled[i]);
      total += p[i];
    }
    if (total == 0.0) {
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    } else {
      for (auto& v : p) v /= total;
    }
  }
  return Distribution(std::move(p));
}

Distribution pool_and_normalize(const HiddenStates& states, int layer, JsdNorm norm) {
  return normalize_pooled(pool_layer(states, layer), norm);
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw ShapeError("KL: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.probs()[i];
    if (pi == 0.0) continue;
    const double qi = q.probs()[i];
    if (qi == 0.0) return std::numeric_limits<double>::infinity();
    total += pi * std::log2(pi / qi);
  }
  return total;
}

double jsd(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw ShapeError("JSD: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += jsd_term(p.probs()[i], q.probs()[i]);
  return std::clamp(total, 0.0, 1.0);
}

LayerProfile layer_jsd_profile(const PooledStates& a, const PooledStates& b, JsdNorm norm) {
  if (a.size() != b.size()) throw ShapeError("layer_jsd_profile: layer counts differ");
  LayerProfile profile{"jsd", {}};
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].size() != b[l].size()) throw ShapeError("layer_jsd_profile: widths differ");
    profile.values.push_back(jsd(normalize_pooled(a[l], norm), normalize_pooled(b[l], norm)));
  }
  return profile;
}

LayerProfile layer_jsd_profile(const HiddenStates& a, const HiddenStates& b, JsdNorm norm) {
  if (a.layers() != b.layers() || a.dims() != b.dims()) {
    throw ShapeError("layer_jsd_profile: states differ in L or d");
  }
  LayerProfile profile{"jsd", {}};
  for (int l = 1; l <= a.layers(); ++l) {
    profile.values.push_back(jsd(pool_and_normalize(a, l, norm), pool_and_normalize(b, l, norm)));
  }
  return profile;
}

double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ShapeError("CKA: representations cover different item counts");
  if (x.rows() < 2) throw UsageError("CKA needs at least two items");
  if (!x.allFinite() || !y.allFinite()) throw NonFiniteError("CKA input is not finite");

  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  const double scale = 1.0 / std::pow(static_cast<double>(x.rows() - 1), 2);
  // tr(K H L H) with linear kernels equals ||Xc^T Yc||_F^2.
  const double hsic_xy = (xc.transpose() * yc).squaredNorm() * scale;
  const double hsic_xx = (xc.transpose() * xc).squaredNorm() * scale;
  const double hsic_yy = (yc.transpose() * yc).squaredNorm() * scale;
  if (hsic_xx <= 0.0 || hsic_yy <= 0.0) {
    throw DegenerateError("CKA undefined: a representation is constant across items");
  }
  return std::clamp(hsic_xy / std::sqrt(hsic_xx * hsic_yy), 0.0, 1.0);
}

Projection2D pca_project(const Matrix& x) {
  if (x.rows() < 3 || x.cols() < 2) throw UsageError("PCA needs n >= 3 points and p >= 2 columns");
  if (!x.allFinite()) throw NonFiniteError("PCA input is not finite");
  const Matrix xc = x.rowwise() - x.colwise().mean();
  if (xc.squaredNorm() == 0.0) throw DegenerateError("PCA undefined: all points are identical");

  Eigen::JacobiSVD<Matrix> svd(xc, Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const double total = sigma.squaredNorm();

  Projection2D out;
  out.components = svd.matrixV().leftCols(2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < out.components.rows(); ++i) {
      if (std::abs(out.components(i, c)) > std::abs(out.components(arg, c))) arg = i;
    }
    if (out.components(arg, c) < 0.0) out.components.col(c) *= -1.0;
    out.explained_variance[static_cast<std::size_t>(c)] =
        sigma.size() > c ? sigma(c) * sigma(c) / total : 0.0;
  }
  out.points = xc * out.components;
  return out;
}

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iterations) {
  const auto n = x.rows();
  if (k < 2 || k > n) throw UsageError("k-means: k must lie in [2, n]");
  SplitMix64 rng(seed);

  // k-means++ seeding.
  std::vector<Eigen::Index> chosen{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))};
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < k) {
    const auto last = chosen.back();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - x.row(last)).squaredNorm());
      total += d2[i];
    }
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    } else {
      std::vector<Eigen::Index> rest;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
      }
      pick = rest[rng.below(rest.size())];
    }
    chosen.push_back(pick);
  }

  KMeansResult result;
  result.centers.resize(k, x.cols());
  for (int c = 0; c < k; ++c) result.centers.row(c) = x.row(chosen[static_cast<std::size_t>(c)]);
  result.labels.assign(static_cast<std::size_t>(n), -1);

  for (int iter = 1; iter <= max_iterations; ++iter) {
    result.iterations = iter;
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(x, i, result.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double dc = squared_distance(x, i, result.centers, c);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (result.labels[i] != best) {
        result.labels[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 1) break;

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    Matrix sums = Matrix::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.labels[i]) += x.row(i);
      ++counts[result.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) result.centers.row(c) = sums.row(c) / counts[c];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[result.labels[i]] <= 1) continue;
        const double di = squared_distance(x, i, result.centers, result.labels[i]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      --counts[result.labels[far]];
      result.labels[far] = c;
      counts[c] = 1;
      result.centers.row(c) = x.row(far);
    }
  }
  return result;
}

SilhouetteReport silhouette(const Matrix& x, const std::vector<std::string>& labels) {
  const auto n = x.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ShapeError("silhouette: label count differs from point count");
  }
  std::vector<std::string> names;
  std::vector<int> group(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = std::find(names.begin(), names.end(), labels[i]);
    if (it == names.end()) {
      names.push_back(labels[i]);
      it = names.end() - 1;
    }
    group[i] = static_cast<int>(it - names.begin());
  }
  const int g = static_cast<int>(names.size());
  if (g < 2) throw UsageError("silhouette needs at least two groups");

  std::vector<std::size_t> sizes(static_cast<std::size_t>(g), 0);
  for (int gi : group) ++sizes[gi];

  SilhouetteReport report;
  report.per_point.resize(static_cast<std::size_t>(n));
  std::vector<double> sums(static_cast<std::size_t>(g));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sums[group[j]] += distance(x, i, j);
    }
    const int own = group[i];
    double s = 0.0;
    if (sizes[own] > 1) {
      const double a = sums[own] / static_cast<double>(sizes[own] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (int c = 0; c < g; ++c) {
        if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
      }
      const double denom = std::max(a, b);
      s = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    report.per_point[i] = s;
  }

  std::vector<double> group_sum(static_cast<std::size_t>(g), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) group_sum[group[i]] += report.per_point[i];
  for (int c = 0; c < g; ++c) {
    report.per_group.push_back({names[c], group_sum[c] / static_cast<double>(sizes[c]), sizes[c]});
  }
  report.overall = std::accumulate(report.per_point.begin(), report.per_point.end(), 0.0) /
                   static_cast<double>(n);
  return report;
}

SilhouetteReport silhouette(const Matrix& x, const std::vector<int>& labels) {
  std::vector<std::string> names;
  names.reserve(labels.size());
  for (int l : labels) names.push_back("cluster " + std::to_string(l));
  return silhouette(x, names);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ShapeError("ARI: partitions differ in size");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, m] : joint) index += pairs(m);
  for (const auto& [key, m] : rows) sum_rows += pairs(m);
  for (const auto& [key, m] : cols) sum_cols += pairs(m);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Matrix stack_layer(const std::vector<PooledStates>& items, int layer) {
  if (items.empty()) throw DataError("stack_layer: no items");
  const auto l = static_cast<std::size_t>(layer - 1);
  if (layer < 1 || l >= items.front().size()) throw UsageError("stack_layer: layer out of range");
  const auto d = static_cast<Eigen::Index>(items.front()[l].size());
  Matrix out(static_cast<Eigen::Index>(items.size()), d);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].size() != items.front().size() || static_cast<Eigen::Index>(items[i][l].size()) != d) {
      throw ShapeError("stack_layer: items differ in shape");
    }
    for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = items[i][l][j];
  }
  return out;
}

}  // namespace rpna
