#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "rpna/error.hpp"
#include "rpna/experiment.hpp"
#include "rpna/remote.hpp"
#include "temp_dir.hpp"

using namespace rpna;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.synth_items = 10;
  c.synth_seed = 4;
  c.conditions = {"Medical Student", "Resident", "Baseline", "Random"};
  c.calibration_n = 10;
  c.random_seeds = 2;
  c.bootstrap_replicates = 1000;
  c.backend.model.max_tokens = 4;
  c.out_dir = out.string();
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RPNA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("synthetic corpora") {
    const auto a = synth_corpus(10, 4, 7);
    CHECK(a == synth_corpus(10, 4, 7));
    CHECK(a != synth_corpus(10, 4, 8));
    for (const auto& item : a.items) {
      CHECK(item.answer_index < 4);
      CHECK(item.n_options() == 4);
    }
    CHECK_THROWS_AS(synth_corpus(0, 4, 1), UsageError);
    CHECK_THROWS_AS(synth_corpus(5, 27, 1), UsageError);
  }

  TEST_CASE("planted backend scores a synthetic corpus perfectly through the engine") {
    ExperimentConfig c;
    c.synth_items = 30;
    c.backend.kind = BackendKind::Planted;
    Engine engine = Engine::from_config(c, resolve_corpus(c));
    for (const auto& cond : builtin_conditions()) CHECK(accuracy(engine.evaluate(cond).run) == 1.0);
  }

  TEST_CASE("config parsing and validation") {
    const auto c = config_from_json(R"({"synthetic":{"items":12},"conditions":["Surgeon","Baseline"],
      "backend":{"kind":"planted","layers":8},"top_layers":6,"jsd_norm":"abs-l1","cka_layers":"mean-all",
      "sweep":{"top_layers":[4,6,8],"fractions":[0.03,0.05,0.1]}})");
    CHECK(c.synth_items == 12);
    CHECK(c.backend.kind == BackendKind::Planted);
    CHECK(c.backend.model.layers == 8);
    CHECK(c.jsd_norm == JsdNorm::AbsL1);
    CHECK(c.cka_layers == CkaLayers::MeanAll);
    REQUIRE(c.sweep.has_value());
    CHECK(config_from_json(config_to_json(c)).top_layers == 6);
    CHECK_THROWS_AS(config_from_json(R"({"bogus":1})"), UsageError);
    CHECK_THROWS_AS(config_from_json(R"({"top_layers":9})"), UsageError);
    CHECK_THROWS_AS(config_from_json(R"({"fraction":0})"), UsageError);
    CHECK_THROWS_AS(config_from_json(R"({"backend":{"kind":"remote"}})"), UsageError);
    CHECK_THROWS_AS(config_from_json(R"({"bootstrap_replicates":10})"), UsageError);
    CHECK_THROWS_AS(config_from_json("{"), UsageError);
  }

  TEST_CASE("run id is a content hash of results-relevant settings") {
    ExperimentConfig a;
    const auto corpus = resolve_corpus(a);
    ExperimentConfig b = a;
    b.out_dir = "/elsewhere";
    b.workers = 3;
    CHECK(run_id(a, corpus) == run_id(b, corpus));
    CHECK(run_id(a, corpus).size() == 16);
    b.fraction = 0.1;
    CHECK(run_id(a, corpus) != run_id(b, corpus));
    CHECK(run_id(a, corpus) != run_id(a, synth_corpus(51, 4, 0)));
    CHECK(slug("Associate Chief Physician") == "associate_chief_physician");
  }

  TEST_CASE("full run emits every artifact family, and is deterministic, isolated and parallel-safe") {
    TempDir tmp;
    auto config = small_config(tmp / "one");
    const auto a = run_experiment(config);
    const fs::path dir = run_directory(config, resolve_corpus(config));
    CHECK(dir.filename() == a.run_id);
    for (const char* f : {"config.json", "artifacts.json", "summary.json", "accuracy.csv", "accuracy_table.csv",
                          "deltas.csv", "ablation_drop.csv", "ablation_drop.svg", "cross_role.csv",
                          "layer_sensitivity.csv", "cka.csv", "cka_heatmap.svg", "cka_last.csv",
                          "cka_mean_all.csv", "pca.csv", "pca.svg", "silhouette.csv", "jsd.csv", "jsd.svg",
                          "stats.csv", "neurons/medical_student.json", "plans/resident_role_diff.json",
                          "plans/resident_random_1.json", "activations/baseline.rpna"}) {
      CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    CHECK_FALSE(fs::exists(dir / "PARTIAL"));
    CHECK(a.accuracy.size() == 4);
    CHECK(a.ablation.size() == 2);
    CHECK(a.cross_role.size() == 2);
    REQUIRE(a.cka_last.has_value());
    CHECK(a.cka_last->values.rows() == 4);
    for (int i = 0; i < 4; ++i) CHECK(a.cka_last->values(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.jsd.size() == 5);
    CHECK(read_pooled(dir / "activations" / "resident.rpna").size() == 10);
    const auto first = tree(dir);
    CHECK(artifacts_to_json(read_artifacts(dir / "artifacts.json")) == slurp(dir / "artifacts.json"));

    // identical config, second output root
    config.out_dir = (tmp / "two").string();
    run_experiment(config);
    CHECK(tree(run_directory(config, resolve_corpus(config))) == first);

    // two workers
    config.out_dir = (tmp / "par").string();
    config.workers = 2;
    run_experiment(config);
    CHECK(tree(run_directory(config, resolve_corpus(config))) == first);

    // stages 4 and 5 off
    config.workers = 1;
    config.out_dir = (tmp / "iso").string();
    config.representation = false;
    config.layer_jsd = false;
    const auto iso = run_experiment(config);
    const auto iso_tree = tree(run_directory(config, resolve_corpus(config)));
    for (const char* f : {"accuracy.csv", "deltas.csv", "ablation_drop.csv", "cross_role.csv", "stats.csv",
                          "layer_sensitivity.csv", "neurons/resident.json", "activations/random.rpna"}) {
      CHECK_MESSAGE(iso_tree.at(f) == first.at(f), f);
    }
    CHECK(iso_tree.count("cka.csv") == 0);
    CHECK(iso_tree.count("jsd.csv") == 0);
  }

  TEST_CASE("a failing stage leaves a partial marker and names the stage") {
    TempDir tmp;
    int port = 0;
    {
      WireServer probe([](const WireRequest&) { return WireResponse{}; });
      port = probe.start();
      probe.stop();
    }
    auto config = small_config(tmp.path());
    config.backend.kind = BackendKind::Remote;
    config.backend.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.backend.timeout_ms = 500;
    try {
      run_experiment(config);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "behavior");
      CHECK(e.kind() == ErrorKind::Backend);
    }
    const fs::path dir = run_directory(config, resolve_corpus(config));
    CHECK(slurp(dir / "PARTIAL").rfind("stage: behavior\n", 0) == 0);
    CHECK(fs::exists(dir / "artifacts.json"));
  }

  TEST_CASE("command line") {
    TempDir tmp;
    {
      std::ofstream(tmp / "cfg.json") << R"({"synthetic":{"items":6},"conditions":["Surgeon","Baseline"],)"
                                      << R"("calibration_n":6,"random_seeds":1,"bootstrap_replicates":1000,)"
                                      << R"("backend":{"kind":"planted"}})";
      std::ofstream(tmp / "bad.json") << R"({"nonsense":true})";
    }
    const std::string cfg = "--config " + (tmp / "cfg.json").string() + " --out " + (tmp / "out").string();
    CHECK(run_cli("synth --items 5 -o " + (tmp / "c.jsonl").string()) == 0);
    CHECK(load_corpus(tmp / "c.jsonl").size() == 5);
    CHECK(run_cli(cfg + " run") == 0);
    CHECK(run_cli(cfg + " select --condition Surgeon -o " + (tmp / "n.json").string()) == 0);
    CHECK(read_neuron_set(tmp / "n.json").size() == 16);
    write_plan(plan_from_set(read_neuron_set(tmp / "n.json")), tmp / "p.json");
    CHECK(run_cli(cfg + " ablate --condition Surgeon --plan " + (tmp / "p.json").string()) == 0);
    CHECK(run_cli(cfg + " ablate --condition Surgeon --random --random-seed 3 --match " +
                  (tmp / "p.json").string() + " -o " + (tmp / "r.json").string()) == 0);
    CHECK(read_plan(tmp / "r.json").size() == 16);
    fs::path run_dir;
    for (const auto& e : fs::directory_iterator(tmp / "out")) run_dir = e.path();
    CHECK(run_cli("analyze --run " + run_dir.string() + " --cka-layers mean-all") == 0);
    CHECK(fs::exists(run_dir / "analysis" / "cka.csv"));
    CHECK(run_cli("report --artifacts " + run_dir.string() + " -o " + (tmp / "rep").string()) == 0);
    CHECK(slurp(tmp / "rep" / "accuracy.csv") == slurp(run_dir / "accuracy.csv"));

    CHECK(run_cli("") == 1);
    CHECK(run_cli("run --bogus-flag") == 1);
    CHECK(run_cli("--config " + (tmp / "bad.json").string() + " run") == 1);
    CHECK(run_cli("report --artifacts " + (tmp / "missing").string() + " -o " + (tmp / "x").string()) == 2);
    CHECK(run_cli(cfg + " select --condition Astronaut -o " + (tmp / "n2.json").string()) == 1);
  }

  TEST_CASE("output root falls back to the environment") {
    ExperimentConfig c;
    ::setenv("RPNA_OUT_DIR", "/tmp/rpna_env_root", 1);
    CHECK(default_out_root() == fs::path("/tmp/rpna_env_root"));
    ::unsetenv("RPNA_OUT_DIR");
    CHECK(default_out_root() == fs::path("rpna_out"));
  }
}
