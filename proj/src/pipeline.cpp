#include <algorithm>
#include <functional>

#include "json_io.hpp"
#include "rpna/error.hpp"
#include "rpna/experiment.hpp"
#include "rpna/report.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace fs = std::filesystem;

namespace {

std::optional<std::size_t> find_kind(const std::vector<PromptCondition>& conditions, ConditionKind kind) {
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (conditions[i].kind == kind) return i;
  }
  return std::nullopt;
}

void write_partial(const fs::path& dir, const std::string& stage, const std::string& message,
                   const RunArtifacts& artifacts) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return;
  try {
    write_text_file(dir / "PARTIAL", "stage: " + stage + "\nerror: " + message + "\n");
    write_artifacts(artifacts, dir / "artifacts.json");
  } catch (const std::exception&) {
    // The original failure is the one worth reporting.
  }
}

void apply_holm(std::vector<StatRow>& rows, std::size_t from) {
  std::vector<double> raw;
  for (std::size_t i = from; i < rows.size(); ++i) raw.push_back(rows[i].result.p_value);
  const auto adjusted = holm(raw);
  for (std::size_t i = from; i < rows.size(); ++i) rows[i].p_holm = adjusted[i - from];
}

std::vector<std::pair<bool, bool>> pair_outcomes(const RunRecord& a, const RunRecord& b) {
  if (a.outcomes.size() != b.outcomes.size()) throw ShapeError("runs differ in item count");
  std::vector<std::pair<bool, bool>> pairs;
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    pairs.emplace_back(a.outcomes[i].correct, b.outcomes[i].correct);
  }
  return pairs;
}

}  // namespace

void analyze_representations(RunArtifacts& a, const std::vector<PromptCondition>& conditions,
                             const std::vector<std::vector<PooledStates>>& pooled,
                             const ExperimentConfig& config) {
  if (conditions.size() != pooled.size()) throw ShapeError("one pooled set per condition expected");
  if (conditions.size() < 2) throw UsageError("representation analysis needs two or more conditions");
  const std::size_t n = pooled.front().size();
  if (n < 2) throw UsageError("representation analysis needs at least two calibration items");
  const int layers = static_cast<int>(pooled.front().front().size());
  const int layer = config.analysis_layer.value_or(layers);
  if (layer < 1 || layer > layers) throw UsageError("analysis layer outside the captured layers");

  std::vector<std::string> labels;
  for (const auto& c : conditions) labels.push_back(c.name);
  const auto k = static_cast<Eigen::Index>(conditions.size());

  auto cka_matrix = [&](int l) {
    std::vector<Matrix> xs;
    for (const auto& p : pooled) xs.push_back(stack_layer(p, l));
    Matrix m(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i; j < k; ++j) {
        m(i, j) = m(j, i) = linear_cka(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      }
    }
    return m;
  };

  a.analysis_layer = layer;
  a.cka_layers = config.cka_layers;
  a.cka_last = SimilarityMatrix{labels, cka_matrix(layer)};
  Matrix sum = Matrix::Zero(k, k);
  for (int l = 1; l <= layers; ++l) sum += cka_matrix(l);
  a.cka_mean_all = SimilarityMatrix{labels, sum / static_cast<double>(layers)};

  const auto d = static_cast<Eigen::Index>(pooled.front().front().front().size());
  Matrix stacked(k * static_cast<Eigen::Index>(n), d);
  std::vector<std::string> row_labels;
  std::vector<int> row_groups;
  for (std::size_t c = 0; c < pooled.size(); ++c) {
    stacked.middleRows(static_cast<Eigen::Index>(c * n), static_cast<Eigen::Index>(n)) = stack_layer(pooled[c], layer);
    for (std::size_t i = 0; i < n; ++i) {
      row_labels.push_back(labels[c]);
      row_groups.push_back(static_cast<int>(c));
    }
  }
  a.pca = pca_project(stacked);
  a.pca_labels = row_labels;
  a.silhouette = silhouette(stacked, row_labels);
  const auto km = kmeans(stacked, static_cast<int>(k), config.kmeans_seed);
  a.kmeans_labels = km.labels;
  a.kmeans_silhouette = silhouette(stacked, km.labels);
  a.kmeans_ari = adjusted_rand_index(km.labels, row_groups);
}

void analyze_layer_jsd(RunArtifacts& a, const std::vector<PromptCondition>& conditions,
                       const std::vector<std::vector<PooledStates>>& pooled, JsdNorm norm) {
  if (conditions.size() != pooled.size()) throw ShapeError("one pooled set per condition expected");
  a.jsd.clear();
  auto curve = [&](std::size_t c, std::size_t ref) {
    const auto& xs = pooled[c];
    const auto& ys = pooled[ref];
    if (xs.size() != ys.size() || xs.empty()) throw ShapeError("JSD needs matched calibration items");
    std::vector<double> total;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto p = layer_jsd_profile(xs[i], ys[i], norm);
      if (total.empty()) total.assign(p.values.size(), 0.0);
      for (std::size_t l = 0; l < p.values.size(); ++l) total[l] += p.values[l];
    }
    for (auto& v : total) v /= static_cast<double>(xs.size());
    a.jsd.push_back({conditions[c].name, conditions[ref].name, {"jsd", std::move(total)}});
  };
  const auto base = find_kind(conditions, ConditionKind::Baseline);
  const auto random = find_kind(conditions, ConditionKind::Random);
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    if (conditions[c].kind != ConditionKind::RolePlay) continue;
    if (base) curve(c, *base);
    if (random) curve(c, *random);
  }
  if (base && random) curve(*random, *base);
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  RunArtifacts a;
  std::optional<fs::path> dir;

  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      if (dir) write_partial(*dir, name, e.what(), a);
      throw StageError(name, e.kind(), e.what());
    } catch (const std::exception& e) {
      if (dir) write_partial(*dir, name, e.what(), a);
      throw StageError(name, ErrorKind::Internal, e.what());
    }
  };

  // 1. corpus, conditions and prompts
  Corpus corpus;
  std::vector<PromptCondition> conditions;
  stage("prompts", [&] {
    corpus = resolve_corpus(config);
    conditions = resolve_conditions(config);
    if (conditions.size() < 2) throw UsageError("a run needs at least two conditions");
    if (!find_kind(conditions, ConditionKind::Baseline)) throw UsageError("a run needs a baseline condition");
    a.run_id = run_id(config, corpus);
    dir = run_directory(config, corpus);
    std::error_code ec;
    fs::remove_all(*dir, ec);
    fs::create_directories(*dir / "activations", ec);
    fs::create_directories(*dir / "neurons");
    fs::create_directories(*dir / "plans");
    write_text_file(*dir / "config.json", canonical_config(config));
    for (const auto& c : conditions) {
      a.conditions.push_back(c.name);
      a.condition_kinds.emplace_back(to_string(c.kind));
      if (config.backend.kind != BackendKind::Remote) {
        for (const auto& item : corpus.items) {
          const auto p = render_prompt(c, item);
          if (static_cast<int>(p.text.size()) + 1 > config.backend.model.context) {
            throw ContextLengthError("prompt for item '" + item.id + "' under '" + c.name +
                                     "' exceeds the context length");
          }
        }
      }
    }
    a.n_items = corpus.size();
    a.calibration_n = std::min(config.calibration_n, corpus.size());
  });

  std::optional<Engine> engine;
  std::vector<std::vector<PooledStates>> pooled(conditions.size());
  const std::size_t base = *find_kind(conditions, ConditionKind::Baseline);
  std::uint64_t bootstrap_stream = 0;

  // 2. answers, accuracy and behavioural statistics
  stage("behavior", [&] {
    engine.emplace(Engine::from_config(config, corpus));
    a.model = engine->descriptor().name;
    const auto& desc = engine->descriptor();
    a.models = {{a.model, std::to_string(desc.layers) + " layers, width " + std::to_string(desc.dims)}};
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      auto ev = engine->evaluate(conditions[c], nullptr, a.calibration_n);
      a.accuracy.push_back({a.model, conditions[c].name, accuracy(ev.run), ev.run.outcomes.size(),
                            unparsed_count(ev.run), std::nullopt});
      a.runs.push_back(std::move(ev.run));
      pooled[c] = std::move(ev.pooled);
      write_pooled(pooled[c], *dir / "activations" / (slug(conditions[c].name) + ".rpna"));
    }
    for (auto& cmp : compare_runs(a.runs)) {
      a.stats.push_back({cmp.name, cmp.result, cmp.p_holm});
    }
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      if (c == base) continue;
      a.deltas.push_back({conditions[c].name + " - " + conditions[base].name,
                          paired_delta_ci(a.runs[c], a.runs[base], config.bootstrap_replicates,
                                          derive_seed(config.bootstrap_seed, bootstrap_stream++))});
    }
  });

  // 3. salience, ablation, cross-role masking and the strength sweep
  stage("ablation", [&] {
    const int dims = engine->descriptor().dims;
    std::vector<std::size_t> roles;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      if (conditions[c].kind == ConditionKind::RolePlay) roles.push_back(c);
    }
    std::vector<NeuronSet> sets(conditions.size());
    std::vector<RunRecord> within(conditions.size());
    const std::size_t ablation_stats = a.stats.size();

    for (std::size_t k = 0; k < roles.size(); ++k) {
      const std::size_t c = roles[k];
      const auto& name = conditions[c].name;
      DeltaProfile profile = calibrate(pooled[c], pooled[base]);
      sets[c] = select_neurons(profile, config.top_layers, config.fraction, name);
      a.salience.push_back({name, profile, sets[c]});
      write_neuron_set(sets[c], *dir / "neurons" / (slug(name) + ".json"));

      const AblationPlan plan = plan_from_set(sets[c]);
      write_plan(plan, *dir / "plans" / (slug(name) + "_role_diff.json"));
      a.plans.push_back(plan);
      within[c] = engine->evaluate(conditions[c], &plan).run;
      a.ablation_runs.push_back(within[c]);

      RoleAblation row;
      row.condition = name;
      row.unmasked = accuracy(a.runs[c]);
      row.role_diff = accuracy(within[c]);
      row.role_diff_drop = paired_delta_ci(a.runs[c], within[c], config.bootstrap_replicates,
                                           derive_seed(config.bootstrap_seed, bootstrap_stream++));
      std::optional<RunRecord> first_random;
      for (int s = 0; s < config.random_seeds; ++s) {
        const auto seed = derive_seed(derive_seed(config.ablation_seed, k), static_cast<std::uint64_t>(s));
        const AblationPlan rp = matched_random_plan(plan, dims, seed);
        write_plan(rp, *dir / "plans" / (slug(name) + "_random_" + std::to_string(s) + ".json"));
        a.plans.push_back(rp);
        auto run = engine->evaluate(conditions[c], &rp).run;
        row.random.push_back(accuracy(run));
        if (s == 0) first_random = run;
        a.ablation_runs.push_back(std::move(run));
      }
      row.random_drop = paired_delta_ci(a.runs[c], *first_random, config.bootstrap_replicates,
                                        derive_seed(config.bootstrap_seed, bootstrap_stream++));
      a.stats.push_back({name + ": role_diff vs random", mcnemar(pair_outcomes(within[c], *first_random)),
                         std::nullopt});
      a.ablation.push_back(std::move(row));
    }
    apply_holm(a.stats, ablation_stats);

    if (config.cross_role && roles.size() >= 2) {
      const std::size_t cross_stats = a.stats.size();
      for (std::size_t source : roles) {
        for (std::size_t target : roles) {
          if (source == target) continue;
          const AblationPlan cp = cross_plan(sets[source], conditions[target].name);
          auto run = engine->evaluate(conditions[target], &cp).run;
          const double acc = accuracy(run);
          a.cross_role.push_back({conditions[source].name, conditions[target].name, acc,
                                  accuracy(a.runs[target]) - acc});
          a.stats.push_back({"cross " + conditions[source].name + " -> " + conditions[target].name +
                                 " vs within " + conditions[target].name,
                             mcnemar(pair_outcomes(within[target], run)), std::nullopt});
          a.ablation_runs.push_back(std::move(run));
        }
      }
      apply_holm(a.stats, cross_stats);
    }

    if (config.sweep && !roles.empty()) {
      std::size_t c = roles.front();
      if (!config.sweep_condition.empty()) {
        auto it = std::find_if(roles.begin(), roles.end(),
                               [&](std::size_t r) { return conditions[r].name == config.sweep_condition; });
        if (it == roles.end()) throw UsageError("sweep condition '" + config.sweep_condition + "' is not a role");
        c = *it;
      }
      const auto& profile = std::find_if(a.salience.begin(), a.salience.end(), [&](const RoleSalience& s) {
                              return s.condition == conditions[c].name;
                            })->profile;
      const double unmasked = accuracy(a.runs[c]);
      a.sweep_condition = conditions[c].name;
      const auto cells = run_sweep(*config.sweep, profile, [&](const AblationPlan& plan) {
        return accuracy(engine->evaluate(conditions[c], &plan).run);
      }, conditions[c].name);
      for (const auto& cell : cells) {
        a.sweep.push_back({cell.top_layers, cell.fraction, cell.accuracy, unmasked - cell.accuracy});
      }
    }
  });

  // 4. representation structure
  if (config.representation) {
    stage("representation", [&] { analyze_representations(a, conditions, pooled, config); });
  }

  // 5. layer-wise divergence
  if (config.layer_jsd) {
    stage("layer_jsd", [&] { analyze_layer_jsd(a, conditions, pooled, config.jsd_norm); });
  }

  stage("report", [&] {
    emit_report(a, *dir);
    write_artifacts(a, *dir / "artifacts.json");
  });
  return a;
}

}  // namespace rpna
