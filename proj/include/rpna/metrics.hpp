#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rpna/salience.hpp"
#include "rpna/states.hpp"

namespace rpna {

using Matrix = Eigen::MatrixXd;

/// How a pooled hidden vector becomes a probability distribution.
enum class JsdNorm { Softmax, AbsL1 };

std::string_view to_string(JsdNorm norm);
JsdNorm parse_jsd_norm(std::string_view text);

/// Non-negative entries summing to 1 (within 1e-9).
class Distribution {
 public:
  /// Throws DataError if entries are negative, non-finite or do not sum to 1.
  explicit Distribution(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

/// Token-mean of one layer (1-based).
std::vector<double> pool_layer(const HiddenStates& states, int layer);

Distribution normalize_pooled(std::span<const double> pooled, JsdNorm norm = JsdNorm::Softmax);

/// Mean over tokens at `layer`, then normalized (softmax by default).
Distribution pool_and_normalize(const HiddenStates& states, int layer,
                                JsdNorm norm = JsdNorm::Softmax);

/// Kullback-Leibler divergence in bits; 0 * log(0 / q) counts as 0.
double kl_divergence(const Distribution& p, const Distribution& q);

/// Jensen-Shannon divergence in bits, in [0, 1]. Symmetric bit-for-bit.
double jsd(const Distribution& p, const Distribution& q);

struct LayerProfile {
  std::string metric_name;
  std::vector<double> values;  // index 0 is layer 1
};

LayerProfile layer_jsd_profile(const HiddenStates& a, const HiddenStates& b,
                               JsdNorm norm = JsdNorm::Softmax);
LayerProfile layer_jsd_profile(const PooledStates& a, const PooledStates& b,
                               JsdNorm norm = JsdNorm::Softmax);

/// Linear CKA between representations of the same n items (rows).
/// Throws ShapeError on row mismatch and DegenerateError when either side is
/// constant across items.
double linear_cka(const Matrix& x, const Matrix& y);

struct SimilarityMatrix {
  std::vector<std::string> labels;
  Matrix values;
};

struct Projection2D {
  Eigen::MatrixX2d points;                // n x 2 scores
  Eigen::MatrixX2d components;            // p x 2 loadings
  std::array<double, 2> explained_variance{};
};

/// Top-two principal components of the column-centred data via SVD. Each
/// component is signed so its largest-magnitude loading is positive.
Projection2D pca_project(const Matrix& x);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  int iterations = 0;
};

/// k-means++ seeding then Lloyd iterations to an assignment fixpoint (at most
/// `max_iterations`). Empty clusters are re-seeded from the farthest point.
KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iterations = 100);

struct GroupSilhouette {
  std::string name;
  double mean = 0.0;
  std::size_t count = 0;
};

struct SilhouetteReport {
  std::vector<double> per_point;
  std::vector<GroupSilhouette> per_group;  // first-appearance order
  double overall = 0.0;
};

/// Euclidean silhouette with the given grouping. Points alone in their group
/// score 0. Throws UsageError with fewer than two groups.
SilhouetteReport silhouette(const Matrix& x, const std::vector<std::string>& labels);
SilhouetteReport silhouette(const Matrix& x, const std::vector<int>& labels);

/// Agreement between two partitions of the same points (1 = identical).
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Rows = items, columns = pooled dims for one layer.
Matrix stack_layer(const std::vector<PooledStates>& items, int layer);

}  // namespace rpna
