#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rpna/ablation.hpp"
#include "rpna/backend.hpp"
#include "rpna/corpus.hpp"
#include "rpna/metrics.hpp"
#include "rpna/prompt.hpp"
#include "rpna/salience.hpp"
#include "rpna/stats.hpp"
#include "rpna/transformer.hpp"

namespace rpna {

enum class BackendKind { Reference, Planted, Remote };

struct BackendSpec {
  BackendKind kind = BackendKind::Reference;
  std::uint64_t seed = 0;
  ModelConfig model;  // shape of reference/planted models; descriptor for remote

  // planted
  std::vector<int> circuit_layers;  // empty: layers 1..min(4, L)
  double circuit_fraction = 0.05;
  std::uint64_t circuit_seed = 0;
  double flip_probability = 0.8;

  // remote
  std::string endpoint;
  int timeout_ms = 30000;
};

enum class CkaLayers { Last, MeanAll };

struct ExperimentConfig {
  std::string corpus_path;  // empty: synthetic corpus below
  int synth_items = 50;
  int synth_options = 4;
  std::uint64_t synth_seed = 0;

  std::string conditions_path;          // empty: built-in conditions
  std::vector<std::string> conditions;  // empty: all available

  BackendSpec backend;

  std::size_t calibration_n = 100;
  int top_layers = kDefaultTopLayers;
  double fraction = kDefaultNeuronFraction;
  std::optional<SweepGrid> sweep;
  std::string sweep_condition;  // empty: first role
  bool cross_role = true;
  int random_seeds = 5;

  std::uint64_t ablation_seed = 1;
  std::uint64_t bootstrap_seed = 2;
  std::uint64_t kmeans_seed = 3;
  int bootstrap_replicates = kDefaultBootstrap;

  JsdNorm jsd_norm = JsdNorm::Softmax;
  std::optional<int> analysis_layer;  // empty: last layer
  CkaLayers cka_layers = CkaLayers::Last;

  bool representation = true;  // stage 4
  bool layer_jsd = true;       // stage 5

  int workers = 1;
  std::string out_dir;  // output root; empty: $RPNA_OUT_DIR or ./rpna_out
};

/// Parses a config record. Unknown keys and out-of-range values are usage errors.
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full record, including out_dir and workers.
std::string config_to_json(const ExperimentConfig& config);
/// Record of every field that can influence results (out_dir and workers
/// excluded), keys sorted.
std::string canonical_config(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config);

/// Hex SHA-256 prefix over the canonical config and the corpus contents.
std::string run_id(const ExperimentConfig& config, const Corpus& corpus);

std::filesystem::path default_out_root();

/// Arithmetic items "Which option equals X + Y?"; the answer letter is a
/// hash of the item id, so it is derivable from the id alone.
Corpus synth_corpus(int n_items, int n_options, std::uint64_t seed);

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const Corpus& corpus);

struct ModelInfo {
  std::string name;
  std::string architecture;
};

struct AccuracyRow {
  std::string model;
  std::string condition;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t unparsed = 0;
  std::optional<int> decimals;  // fixed-decimal rendering; shortest round-trip otherwise
};

struct NamedInterval {
  std::string name;
  DeltaInterval interval;
};

struct RoleAblation {
  std::string condition;
  double unmasked = 0.0;
  double role_diff = 0.0;              // accuracy under the role's own plan
  DeltaInterval role_diff_drop;        // unmasked - role_diff
  std::vector<double> random;          // accuracy under each matched random plan
  DeltaInterval random_drop;           // unmasked - first random plan
};

struct CrossCell {
  std::string source;
  std::string target;
  double accuracy = 0.0;
  double drop = 0.0;  // target's unmasked accuracy minus this
};

struct SweepRow {
  int top_layers = 0;
  double fraction = 0.0;
  double accuracy = 0.0;
  double drop = 0.0;
};

struct JsdCurve {
  std::string condition;
  std::string reference;
  LayerProfile profile;
};

struct StatRow {
  std::string comparison;
  TestResult result;
  std::optional<double> p_holm;
};

struct RoleSalience {
  std::string condition;
  DeltaProfile profile;
  NeuronSet neurons;
};

struct RunArtifacts {
  std::string run_id;
  std::string model;
  std::vector<ModelInfo> models;  // table layout; defaults to the one model
  std::vector<std::string> conditions;
  std::vector<std::string> condition_kinds;  // role_play, baseline or random
  std::size_t n_items = 0;
  std::size_t calibration_n = 0;

  // stage 2
  std::vector<RunRecord> runs;  // unmasked, one per condition
  std::vector<AccuracyRow> accuracy;
  std::vector<NamedInterval> deltas;

  // stage 3
  std::vector<RoleSalience> salience;
  std::vector<AblationPlan> plans;
  std::vector<RunRecord> ablation_runs;
  std::vector<RoleAblation> ablation;
  std::vector<CrossCell> cross_role;
  std::string sweep_condition;
  std::vector<SweepRow> sweep;

  // stage 4
  int analysis_layer = 0;
  CkaLayers cka_layers = CkaLayers::Last;
  std::optional<SimilarityMatrix> cka_last;
  std::optional<SimilarityMatrix> cka_mean_all;
  std::optional<Projection2D> pca;
  std::vector<std::string> pca_labels;  // condition of each PCA row
  std::optional<SilhouetteReport> silhouette;
  std::vector<int> kmeans_labels;
  std::optional<SilhouetteReport> kmeans_silhouette;
  std::optional<double> kmeans_ari;

  // stage 5
  std::vector<JsdCurve> jsd;

  std::vector<StatRow> stats;
};

std::string artifacts_to_json(const RunArtifacts& artifacts);
RunArtifacts artifacts_from_json(std::string_view text);
void write_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& path);
RunArtifacts read_artifacts(const std::filesystem::path& path);

/// Generation and scoring over a corpus, fanned out across `workers`
/// backend instances. Results are merged in corpus order.
class Engine {
 public:
  Engine(Corpus corpus, std::vector<std::unique_ptr<Backend>> workers);
  /// Builds `config.workers` backends from the config's spec.
  static Engine from_config(const ExperimentConfig& config, Corpus corpus);

  const Corpus& corpus() const noexcept { return corpus_; }
  const BackendDescriptor& descriptor() const { return workers_.front()->descriptor(); }

  struct Evaluation {
    RunRecord run;
    std::vector<PooledStates> pooled;  // first `capture_n` items
  };

  /// Prompts every item under `condition`, optionally masked by `plan`, and
  /// captures token-mean states for the first `capture_n` items.
  Evaluation evaluate(const PromptCondition& condition, const AblationPlan* plan = nullptr,
                      std::size_t capture_n = 0);

  /// Token-mean states for the first `n` items, without scoring.
  std::vector<PooledStates> capture(const PromptCondition& condition, std::size_t n);

 private:
  Corpus corpus_;
  std::vector<std::unique_ptr<Backend>> workers_;
};

/// Conditions named by the config, in config order (or all available).
std::vector<PromptCondition> resolve_conditions(const ExperimentConfig& config);

Corpus resolve_corpus(const ExperimentConfig& config);

/// Role-vs-baseline profile over `baseline` and `role` pooled states, item by item.
DeltaProfile calibrate(const std::vector<PooledStates>& role,
                       const std::vector<PooledStates>& baseline);

/// Runs all five stages and persists artifacts under <out root>/<run id>.
/// A failing stage leaves a PARTIAL marker and throws StageError.
RunArtifacts run_experiment(const ExperimentConfig& config);

/// Directory a config's run is written to.
std::filesystem::path run_directory(const ExperimentConfig& config, const Corpus& corpus);

/// Condition-stacked pooled states (one row per calibration item) stored in
/// the activation-exchange format with T = items.
void write_pooled(const std::vector<PooledStates>& pooled, const std::filesystem::path& path);
std::vector<PooledStates> read_pooled(const std::filesystem::path& path);

/// Stage 4 and 5 analyses from per-condition pooled states. `pooled[i]`
/// belongs to `conditions[i]`.
void analyze_representations(RunArtifacts& artifacts,
                             const std::vector<PromptCondition>& conditions,
                             const std::vector<std::vector<PooledStates>>& pooled,
                             const ExperimentConfig& config);
void analyze_layer_jsd(RunArtifacts& artifacts, const std::vector<PromptCondition>& conditions,
                       const std::vector<std::vector<PooledStates>>& pooled, JsdNorm norm);

/// File-name-safe form of a condition name.
std::string slug(std::string_view name);

}  // namespace rpna
