// Command-line front end: synth, run, select, ablate, analyze, report, serve.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rpna/ablation.hpp"
#include "rpna/error.hpp"
#include "rpna/experiment.hpp"
#include "rpna/remote.hpp"
#include "rpna/report.hpp"

namespace fs = std::filesystem;
using namespace rpna;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct Overrides {
  std::optional<std::size_t> calibration_n;
  std::string jsd_norm;
  std::optional<int> layer;
  std::string cka_layers;
  std::optional<int> workers;
};

ExperimentConfig load(const Globals& g, const Overrides& o = {}) {
  ExperimentConfig config = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (!g.out.empty()) config.out_dir = g.out;
  if (g.seed) config.backend.seed = *g.seed;
  if (o.calibration_n) config.calibration_n = *o.calibration_n;
  if (!o.jsd_norm.empty()) config.jsd_norm = parse_jsd_norm(o.jsd_norm);
  if (o.layer) config.analysis_layer = *o.layer;
  if (!o.cka_layers.empty()) {
    if (o.cka_layers != "last" && o.cka_layers != "mean-all") throw UsageError("--cka-layers takes last or mean-all");
    config.cka_layers = o.cka_layers == "last" ? CkaLayers::Last : CkaLayers::MeanAll;
  }
  if (o.workers) config.workers = *o.workers;
  validate_config(config);
  return config;
}

const PromptCondition& find_condition(const std::vector<PromptCondition>& conditions, const std::string& name) {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw UsageError("condition '" + name + "' is not part of this config");
}

const PromptCondition& find_baseline(const std::vector<PromptCondition>& conditions) {
  for (const auto& c : conditions) {
    if (c.kind == ConditionKind::Baseline) return c;
  }
  throw UsageError("config has no baseline condition");
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--calibration-n", o.calibration_n, "Items used for calibration and analysis");
  cmd->add_option("--jsd-norm", o.jsd_norm, "softmax or abs-l1");
  cmd->add_option("--layer", o.layer, "Layer for CKA and PCA (default: last)");
  cmd->add_option("--cka-layers", o.cka_layers, "last or mean-all");
  cmd->add_option("--workers", o.workers, "Parallel backend instances");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Role-prompt neuron activation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output root (default: $RPNA_OUT_DIR or ./rpna_out)");
  app.add_option("--seed", g.seed, "Backend seed override");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic multiple-choice corpus");
  int items = 50, options = 4;
  std::string synth_out;
  synth->add_option("--items", items, "Number of items");
  synth->add_option("--options", options, "Options per item");
  synth->add_option("-o,--output", synth_out, "Output JSONL path")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  Overrides run_over;
  add_overrides(run, run_over);

  // select
  auto* select = app.add_subcommand("select", "Calibrate and select role-sensitive neurons");
  std::string select_condition, select_out;
  std::optional<int> select_k;
  std::optional<double> select_r;
  Overrides select_over;
  select->add_option("--condition", select_condition, "Role condition")->required();
  select->add_option("-K,--top-layers", select_k, "Layers to keep");
  select->add_option("-r,--fraction", select_r, "Fraction of dims per layer");
  select->add_option("-o,--output", select_out, "Neuron set path")->required();
  select->add_option("--calibration-n", select_over.calibration_n, "Calibration items");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Evaluate a condition under a masking plan");
  std::string ablate_condition, plan_path, match_path, ablate_out;
  bool random = false;
  std::uint64_t random_seed = 0;
  ablate->add_option("--condition", ablate_condition, "Condition to prompt")->required();
  ablate->add_option("--plan", plan_path, "Plan to apply");
  ablate->add_flag("--random", random, "Apply a random plan matched to --match");
  ablate->add_option("--random-seed", random_seed, "Seed of the random plan (defaults to --seed)");
  ablate->add_option("--match", match_path, "Plan whose layers and counts the random plan copies");
  ablate->add_option("-o,--output", ablate_out, "Write the applied plan and accuracy here (JSON)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Recompute representation metrics from a stored run");
  std::string run_dir, analyze_out;
  std::uint64_t kmeans_seed = 3;
  std::string jsd_norm = "softmax", cka_layers = "last";
  std::optional<int> analyze_layer;
  analyze->add_option("--run", run_dir, "Run directory")->required();
  analyze->add_option("-o,--output", analyze_out, "Output directory (default: <run>/analysis)");
  analyze->add_option("--jsd-norm", jsd_norm, "softmax or abs-l1");
  analyze->add_option("--layer", analyze_layer, "Layer for CKA and PCA");
  analyze->add_option("--cka-layers", cka_layers, "last or mean-all");
  analyze->add_option("--kmeans-seed", kmeans_seed, "k-means seed");

  // report
  auto* report = app.add_subcommand("report", "Render tables and figures from an artifact record");
  std::string artifacts_path, report_out;
  report->add_option("--artifacts", artifacts_path, "artifacts.json or a run directory")->required();
  report->add_option("-o,--output", report_out, "Output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the configured backend over the wire protocol");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      write_corpus(synth_corpus(items, options, g.seed.value_or(0)), synth_out);
      std::cout << synth_out << "\n";
    } else if (run->parsed()) {
      const auto config = load(g, run_over);
      const auto artifacts = run_experiment(config);
      std::cout << run_directory(config, resolve_corpus(config)).string() << "\n";
      for (const auto& row : artifacts.accuracy) {
        std::cout << row.condition << "\t" << format_number(row.accuracy) << "\n";
      }
    } else if (select->parsed()) {
      auto config = load(g, select_over);
      const auto conditions = resolve_conditions(config);
      const auto& role = find_condition(conditions, select_condition);
      const auto& base = find_baseline(conditions);
      Engine engine = Engine::from_config(config, resolve_corpus(config));
      const auto n = config.calibration_n;
      const auto profile = calibrate(engine.capture(role, n), engine.capture(base, n));
      const auto set = select_neurons(profile, select_k.value_or(config.top_layers),
                                      select_r.value_or(config.fraction), role.name);
      write_neuron_set(set, select_out);
      std::cout << select_out << "\t" << set.size() << " neurons\n";
    } else if (ablate->parsed()) {
      auto config = load(g);
      const auto conditions = resolve_conditions(config);
      const auto& condition = find_condition(conditions, ablate_condition);
      Engine engine = Engine::from_config(config, resolve_corpus(config));
      AblationPlan plan;
      if (random) {
        if (match_path.empty()) throw UsageError("--random needs --match <plan>");
        const std::uint64_t seed = ablate->count("--random-seed") ? random_seed : g.seed.value_or(0);
        plan = matched_random_plan(read_plan(match_path), engine.descriptor().dims, seed);
      } else {
        if (plan_path.empty()) throw UsageError("ablate needs --plan or --random");
        plan = read_plan(plan_path);
      }
      const auto baseline = engine.evaluate(condition).run;
      const auto masked = engine.evaluate(condition, &plan).run;
      std::cout << condition.name << "\tunmasked " << format_number(accuracy(baseline)) << "\tmasked "
                << format_number(accuracy(masked)) << "\t" << plan.provenance.tag() << "\n";
      if (!ablate_out.empty()) write_plan(plan, ablate_out);
    } else if (analyze->parsed()) {
      const fs::path dir = run_dir;
      RunArtifacts artifacts = read_artifacts(dir / "artifacts.json");
      std::vector<PromptCondition> conditions;
      std::vector<std::vector<PooledStates>> pooled;
      for (std::size_t i = 0; i < artifacts.conditions.size(); ++i) {
        PromptCondition c;
        c.name = artifacts.conditions[i];
        c.kind = i < artifacts.condition_kinds.size() ? parse_condition_kind(artifacts.condition_kinds[i])
                                                      : ConditionKind::RolePlay;
        conditions.push_back(c);
        pooled.push_back(read_pooled(dir / "activations" / (slug(c.name) + ".rpna")));
      }
      ExperimentConfig config;
      config.analysis_layer = analyze_layer;
      config.kmeans_seed = kmeans_seed;
      config.jsd_norm = parse_jsd_norm(jsd_norm);
      if (cka_layers != "last" && cka_layers != "mean-all") throw UsageError("--cka-layers takes last or mean-all");
      config.cka_layers = cka_layers == "last" ? CkaLayers::Last : CkaLayers::MeanAll;
      analyze_representations(artifacts, conditions, pooled, config);
      analyze_layer_jsd(artifacts, conditions, pooled, config.jsd_norm);
      const fs::path out = analyze_out.empty() ? dir / "analysis" : fs::path(analyze_out);
      for (const auto& f : emit_report(artifacts, out)) std::cout << f.string() << "\n";
    } else if (report->parsed()) {
      fs::path path = artifacts_path;
      if (fs::is_directory(path)) path /= "artifacts.json";
      for (const auto& f : emit_report(read_artifacts(path), report_out)) std::cout << f.string() << "\n";
    } else if (serve->parsed()) {
      const auto config = load(g);
      auto backend = make_backend(config.backend, resolve_corpus(config));
      WireServer server(serve_backend(*backend));
      std::cout << "serving " << backend->descriptor().name << " on " << host << ":" << port << "\n"
                << std::flush;
      server.listen(host, port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
