#include "json_io.hpp"
#include "rpna/error.hpp"
#include "rpna/experiment.hpp"

namespace rpna {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows, Eigen::Index cols_hint = -1) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::Index p = n > 0 ? static_cast<Eigen::Index>(rows[0].size()) : std::max<Eigen::Index>(cols_hint, 0);
  Matrix m(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != p) throw FormatError("ragged matrix in artifacts");
    for (Eigen::Index j = 0; j < p; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

json interval_to_json(const DeltaInterval& d) { return {{"delta", d.delta}, {"lo", d.lo}, {"hi", d.hi}}; }

DeltaInterval interval_from_json(const json& j) {
  return {j.at("delta").get<double>(), j.at("lo").get<double>(), j.at("hi").get<double>()};
}

json run_to_json(const RunRecord& run) {
  json outcomes = json::array();
  for (const auto& o : run.outcomes) {
    outcomes.push_back({{"id", o.item_id},
                        {"choice", o.choice ? json(*o.choice) : json(nullptr)},
                        {"correct", o.correct}});
  }
  return {{"condition", run.condition},
          {"ablation", run.ablation ? json(*run.ablation) : json(nullptr)},
          {"outcomes", std::move(outcomes)}};
}

RunRecord run_from_json(const json& j) {
  RunRecord run;
  run.condition = j.at("condition").get<std::string>();
  if (j.contains("ablation") && !j["ablation"].is_null()) run.ablation = j["ablation"].get<std::string>();
  for (const auto& o : j.at("outcomes")) {
    Outcome out;
    out.item_id = o.at("id").get<std::string>();
    if (!o.at("choice").is_null()) out.choice = o["choice"].get<int>();
    out.correct = o.at("correct").get<bool>();
    run.outcomes.push_back(std::move(out));
  }
  return run;
}

json silhouette_to_json(const SilhouetteReport& s) {
  json groups = json::array();
  for (const auto& g : s.per_group) groups.push_back({{"name", g.name}, {"mean", g.mean}, {"count", g.count}});
  return {{"per_point", s.per_point}, {"per_group", std::move(groups)}, {"overall", s.overall}};
}

SilhouetteReport silhouette_from_json(const json& j) {
  SilhouetteReport s;
  s.per_point = j.at("per_point").get<std::vector<double>>();
  for (const auto& g : j.at("per_group")) {
    s.per_group.push_back({g.at("name").get<std::string>(), g.at("mean").get<double>(),
                           g.at("count").get<std::size_t>()});
  }
  s.overall = j.at("overall").get<double>();
  return s;
}

json similarity_to_json(const SimilarityMatrix& s) {
  return {{"labels", s.labels}, {"values", matrix_to_json(s.values)}};
}

SimilarityMatrix similarity_from_json(const json& j) {
  SimilarityMatrix s;
  s.labels = j.at("labels").get<std::vector<std::string>>();
  s.values = matrix_from_json(j.at("values"));
  if (s.values.rows() != static_cast<Eigen::Index>(s.labels.size()) || s.values.cols() != s.values.rows()) {
    throw FormatError("similarity matrix does not match its labels");
  }
  return s;
}

json test_to_json(const TestResult& t) {
  return {{"statistic", t.statistic},
          {"df", t.df ? json(*t.df) : json(nullptr)},
          {"p", t.p_value},
          {"method", t.method}};
}

TestResult test_from_json(const json& j) {
  TestResult t;
  t.statistic = j.at("statistic").get<double>();
  if (!j.at("df").is_null()) t.df = j["df"].get<int>();
  t.p_value = j.at("p").get<double>();
  t.method = j.at("method").get<std::string>();
  return t;
}

template <typename T>
json optional_to_json(const std::optional<T>& value, json (*convert)(const T&)) {
  return value ? convert(*value) : json(nullptr);
}

}  // namespace

std::string artifacts_to_json(const RunArtifacts& a) {
  json doc;
  doc["run_id"] = a.run_id;
  doc["model"] = a.model;
  json models = json::array();
  for (const auto& m : a.models) models.push_back({{"name", m.name}, {"architecture", m.architecture}});
  doc["models"] = std::move(models);
  doc["conditions"] = a.conditions;
  doc["condition_kinds"] = a.condition_kinds;
  doc["n_items"] = a.n_items;
  doc["calibration_n"] = a.calibration_n;

  json runs = json::array();
  for (const auto& r : a.runs) runs.push_back(run_to_json(r));
  doc["runs"] = std::move(runs);

  json acc = json::array();
  for (const auto& r : a.accuracy) {
    json row = {{"model", r.model}, {"condition", r.condition}, {"accuracy", r.accuracy},
                {"n", r.n}, {"unparsed", r.unparsed}};
    if (r.decimals) row["decimals"] = *r.decimals;
    acc.push_back(std::move(row));
  }
  doc["accuracy"] = std::move(acc);

  json deltas = json::array();
  for (const auto& d : a.deltas) deltas.push_back({{"name", d.name}, {"interval", interval_to_json(d.interval)}});
  doc["deltas"] = std::move(deltas);

  json salience = json::array();
  for (const auto& s : a.salience) {
    salience.push_back({{"condition", s.condition},
                        {"per_layer_delta", s.profile.per_layer_delta},
                        {"layer_sensitivity", s.profile.layer_sensitivity},
                        {"n_samples", s.profile.n_samples},
                        {"neurons", json::parse(neuron_set_to_json(s.neurons))}});
  }
  doc["salience"] = std::move(salience);

  json plans = json::array();
  for (const auto& p : a.plans) plans.push_back(plan_to_json_value(p));
  doc["plans"] = std::move(plans);

  json ablation_runs = json::array();
  for (const auto& r : a.ablation_runs) ablation_runs.push_back(run_to_json(r));
  doc["ablation_runs"] = std::move(ablation_runs);

  json ablation = json::array();
  for (const auto& r : a.ablation) {
    ablation.push_back({{"condition", r.condition},
                        {"unmasked", r.unmasked},
                        {"role_diff", r.role_diff},
                        {"role_diff_drop", interval_to_json(r.role_diff_drop)},
                        {"random", r.random},
                        {"random_drop", interval_to_json(r.random_drop)}});
  }
  doc["ablation"] = std::move(ablation);

  json cross = json::array();
  for (const auto& c : a.cross_role) {
    cross.push_back({{"source", c.source}, {"target", c.target}, {"accuracy", c.accuracy}, {"drop", c.drop}});
  }
  doc["cross_role"] = std::move(cross);

  doc["sweep_condition"] = a.sweep_condition;
  json sweep = json::array();
  for (const auto& s : a.sweep) {
    sweep.push_back({{"top_layers", s.top_layers}, {"fraction", s.fraction},
                     {"accuracy", s.accuracy}, {"drop", s.drop}});
  }
  doc["sweep"] = std::move(sweep);

  doc["analysis_layer"] = a.analysis_layer;
  doc["cka_layers"] = a.cka_layers == CkaLayers::Last ? "last" : "mean-all";
  doc["cka_last"] = optional_to_json<SimilarityMatrix>(a.cka_last, similarity_to_json);
  doc["cka_mean_all"] = optional_to_json<SimilarityMatrix>(a.cka_mean_all, similarity_to_json);
  if (a.pca) {
    doc["pca"] = {{"points", matrix_to_json(a.pca->points)},
                  {"components", matrix_to_json(a.pca->components)},
                  {"explained_variance", a.pca->explained_variance},
                  {"labels", a.pca_labels}};
  } else {
    doc["pca"] = nullptr;
  }
  doc["silhouette"] = optional_to_json<SilhouetteReport>(a.silhouette, silhouette_to_json);
  doc["kmeans_labels"] = a.kmeans_labels;
  doc["kmeans_silhouette"] = optional_to_json<SilhouetteReport>(a.kmeans_silhouette, silhouette_to_json);
  doc["kmeans_ari"] = a.kmeans_ari ? json(*a.kmeans_ari) : json(nullptr);

  json jsd = json::array();
  for (const auto& c : a.jsd) {
    jsd.push_back({{"condition", c.condition}, {"reference", c.reference},
                   {"metric", c.profile.metric_name}, {"values", c.profile.values}});
  }
  doc["jsd"] = std::move(jsd);

  json stats = json::array();
  for (const auto& s : a.stats) {
    stats.push_back({{"comparison", s.comparison}, {"result", test_to_json(s.result)},
                     {"p_holm", s.p_holm ? json(*s.p_holm) : json(nullptr)}});
  }
  doc["stats"] = std::move(stats);
  return dump_json(doc, 1) + "\n";
}

RunArtifacts artifacts_from_json(std::string_view text) {
  RunArtifacts a;
  try {
    const json doc = json::parse(text);
    auto opt = [&](const char* key) -> const json* {
      auto it = doc.find(key);
      return it == doc.end() || it->is_null() ? nullptr : &*it;
    };
    a.run_id = doc.value("run_id", "");
    a.model = doc.value("model", "");
    if (auto* m = opt("models")) {
      for (const auto& e : *m) a.models.push_back({e.at("name").get<std::string>(), e.value("architecture", "")});
    }
    if (auto* c = opt("conditions")) a.conditions = c->get<std::vector<std::string>>();
    if (auto* c = opt("condition_kinds")) a.condition_kinds = c->get<std::vector<std::string>>();
    a.n_items = doc.value("n_items", std::size_t{0});
    a.calibration_n = doc.value("calibration_n", std::size_t{0});
    if (auto* r = opt("runs")) {
      for (const auto& e : *r) a.runs.push_back(run_from_json(e));
    }
    if (auto* r = opt("accuracy")) {
      for (const auto& e : *r) {
        AccuracyRow row;
        row.model = e.value("model", a.model);
        row.condition = e.at("condition").get<std::string>();
        row.accuracy = e.at("accuracy").get<double>();
        row.n = e.value("n", std::size_t{0});
        row.unparsed = e.value("unparsed", std::size_t{0});
        if (e.contains("decimals") && !e["decimals"].is_null()) row.decimals = e["decimals"].get<int>();
        a.accuracy.push_back(std::move(row));
      }
    }
    if (auto* r = opt("deltas")) {
      for (const auto& e : *r) a.deltas.push_back({e.at("name").get<std::string>(), interval_from_json(e.at("interval"))});
    }
    if (auto* r = opt("salience")) {
      for (const auto& e : *r) {
        RoleSalience s;
        s.condition = e.at("condition").get<std::string>();
        s.profile.per_layer_delta = e.at("per_layer_delta").get<LayerDeltas>();
        s.profile.layer_sensitivity = e.at("layer_sensitivity").get<std::vector<double>>();
        s.profile.n_samples = e.at("n_samples").get<std::size_t>();
        s.neurons = neuron_set_from_json(e.at("neurons").dump());
        a.salience.push_back(std::move(s));
      }
    }
    if (auto* r = opt("plans")) {
      for (const auto& e : *r) a.plans.push_back(plan_from_json_value(e));
    }
    if (auto* r = opt("ablation_runs")) {
      for (const auto& e : *r) a.ablation_runs.push_back(run_from_json(e));
    }
    if (auto* r = opt("ablation")) {
      for (const auto& e : *r) {
        RoleAblation ab;
        ab.condition = e.at("condition").get<std::string>();
        ab.unmasked = e.at("unmasked").get<double>();
        ab.role_diff = e.at("role_diff").get<double>();
        ab.role_diff_drop = interval_from_json(e.at("role_diff_drop"));
        ab.random = e.at("random").get<std::vector<double>>();
        ab.random_drop = interval_from_json(e.at("random_drop"));
        a.ablation.push_back(std::move(ab));
      }
    }
    if (auto* r = opt("cross_role")) {
      for (const auto& e : *r) {
        a.cross_role.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                                e.at("accuracy").get<double>(), e.at("drop").get<double>()});
      }
    }
    a.sweep_condition = doc.value("sweep_condition", "");
    if (auto* r = opt("sweep")) {
      for (const auto& e : *r) {
        a.sweep.push_back({e.at("top_layers").get<int>(), e.at("fraction").get<double>(),
                           e.at("accuracy").get<double>(), e.at("drop").get<double>()});
      }
    }
    a.analysis_layer = doc.value("analysis_layer", 0);
    a.cka_layers = doc.value("cka_layers", std::string("last")) == "mean-all" ? CkaLayers::MeanAll : CkaLayers::Last;
    if (auto* r = opt("cka_last")) a.cka_last = similarity_from_json(*r);
    if (auto* r = opt("cka_mean_all")) a.cka_mean_all = similarity_from_json(*r);
    if (auto* r = opt("pca")) {
      Projection2D p;
      const Matrix points = matrix_from_json(r->at("points"), 2);
      const Matrix comps = matrix_from_json(r->at("components"), 2);
      if (points.cols() != 2 || comps.cols() != 2) throw FormatError("PCA record must have two columns");
      p.points = points;
      p.components = comps;
      const auto ev = r->at("explained_variance").get<std::vector<double>>();
      if (ev.size() != 2) throw FormatError("PCA record needs two explained-variance entries");
      p.explained_variance = {ev[0], ev[1]};
      a.pca = std::move(p);
      a.pca_labels = r->at("labels").get<std::vector<std::string>>();
    }
    if (auto* r = opt("silhouette")) a.silhouette = silhouette_from_json(*r);
    if (auto* r = opt("kmeans_labels")) a.kmeans_labels = r->get<std::vector<int>>();
    if (auto* r = opt("kmeans_silhouette")) a.kmeans_silhouette = silhouette_from_json(*r);
    if (auto* r = opt("kmeans_ari")) a.kmeans_ari = r->get<double>();
    if (auto* r = opt("jsd")) {
      for (const auto& e : *r) {
        a.jsd.push_back({e.at("condition").get<std::string>(), e.at("reference").get<std::string>(),
                         {e.value("metric", std::string("jsd")), e.at("values").get<std::vector<double>>()}});
      }
    }
    if (auto* r = opt("stats")) {
      for (const auto& e : *r) {
        StatRow s{e.at("comparison").get<std::string>(), test_from_json(e.at("result")), std::nullopt};
        if (e.contains("p_holm") && !e["p_holm"].is_null()) s.p_holm = e["p_holm"].get<double>();
        a.stats.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("artifact record is malformed: ") + e.what());
  }
  return a;
}

void write_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& path) {
  write_text_file(path, artifacts_to_json(artifacts));
}

RunArtifacts read_artifacts(const std::filesystem::path& path) {
  return artifacts_from_json(read_text_file(path));
}

}  // namespace rpna
