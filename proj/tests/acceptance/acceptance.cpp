// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "generators.hpp"
#include "oracles.hpp"
#include "rpna/error.hpp"
#include "rpna/experiment.hpp"
#include "rpna/metrics.hpp"
#include "rpna/remote.hpp"
#include "rpna/report.hpp"
#include "rpna/states.hpp"
#include "rpna/stats.hpp"
#include "temp_dir.hpp"

using namespace rpna;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const fs::path kFixtures = RPNA_FIXTURE_DIR;

/// Collects the first failed expectation of a criterion.
struct Check {
  std::string failure;
  void expect(bool ok, const std::string& what) {
    if (!ok && failure.empty()) failure = what;
  }
  template <class E, class F>
  void expect_throw(F&& f, const std::string& what) {
    try {
      f();
    } catch (const E&) {
      return;
    } catch (const std::exception& e) {
      expect(false, what + " (threw " + e.what() + ")");
      return;
    }
    expect(false, what + " (no exception)");
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = sha256_hex(slurp(e.path()));
  }
  return out;
}

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// 1. metric invariants
void metric_invariants(Check& c) {
  gen::Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const int n = gen::integer(rng, 2, 40);
    const Distribution p(gen::probabilities(rng, n)), q(gen::probabilities(rng, n));
    const double d = jsd(p, q);
    c.expect(jsd(p, p) <= 1e-12, "jsd(P,P) > 1e-12");
    c.expect(d >= 0.0 && d <= 1.0, "jsd outside [0,1]");
    c.expect(d == jsd(q, p), "jsd not symmetric");
  }
  for (int i = 0; i < 20; ++i) {
    const Matrix x = gen::matrix(rng, 16, 8);
    const Matrix r = gen::orthogonal(rng, 8);
    c.expect(std::abs(linear_cka(x, x) - 1.0) <= 1e-9, "CKA(X,X) != 1");
    c.expect(std::abs(linear_cka(x, x * r) - 1.0) <= 1e-6, "CKA not orthogonally invariant");
    c.expect(std::abs(linear_cka(x, 3.0 * x) - 1.0) <= 1e-6, "CKA not scale invariant");
  }
  const Eigen::VectorXd dir = gen::matrix(rng, 6, 1).col(0);
  Matrix line(12, 6);
  for (int i = 0; i < 12; ++i) line.row(i) = (gen::uniform(rng, -5, 5) * dir).transpose();
  const auto pca = pca_project(line);
  c.expect(std::abs(pca.explained_variance[0] - 1.0) <= 1e-9 && std::abs(pca.explained_variance[1]) <= 1e-9,
           "rank-1 PCA explained variance != (1,0)");
  const std::vector<std::string> labels = {"A", "A", "B", "B"};
  const auto s1 = silhouette(column({0, 0, 10, 10}), labels);
  c.expect(std::abs(s1.overall - 1.0) <= 1e-6, "silhouette {0,0,10,10} != 1");
  const auto s2 = silhouette(column({0, 1, 10, 11}), labels);
  c.expect(std::abs(s2.per_point[0] - 0.904762) <= 1e-6, "silhouette point 0 != 0.904762");
}

// 2. statistics fixtures
void statistics_fixtures(Check& c) {
  const auto q = cochran_q({{1, 1, 0}, {1, 0, 0}, {1, 1, 1}, {0, 1, 0}});
  c.expect(std::abs(q.statistic - 2.6667) <= 1e-4, "Cochran Q = " + fmt(q.statistic));
  c.expect(std::abs(q.p_value - std::exp(-q.statistic / 2.0)) <= 1e-4 && std::abs(q.p_value - 0.2636) <= 1e-4,
           "Cochran p = " + fmt(q.p_value));
  c.expect(std::abs(mcnemar_from_counts(1, 3).p_value - 0.625) <= 1e-12, "McNemar exact p != 0.625");
  const auto cc = mcnemar_from_counts(10, 25);
  c.expect(std::abs(cc.statistic - 5.6) <= 1e-12 && cc.df == 1, "McNemar cc statistic != 5.6");
  const std::vector<double> p = {0.01, 0.04, 0.03};
  const auto h = holm(p);
  c.expect(std::abs(h[0] - 0.03) <= 1e-12 && std::abs(h[1] - 0.06) <= 1e-12 && std::abs(h[2] - 0.06) <= 1e-12,
           "Holm adjustment mismatch");
}

// 3. salience oracle equivalence
void salience_oracle(Check& c) {
  gen::Rng rng(303);
  for (int trial = 0; trial < 50; ++trial) {
    const auto profile = gen::profile(rng, 6, 32, trial % 2 == 0);
    for (int k = 1; k <= 6; ++k) {
      for (double r : {0.05, 0.25, 1.0}) {
        c.expect(select_neurons(profile, k, r).entries == oracle::brute_force_select(profile.per_layer_delta, k, r),
                 "selection differs from oracle at trial " + std::to_string(trial) + ", K=" + std::to_string(k));
      }
    }
  }
}

ExperimentConfig planted_config(const fs::path& out, int items) {
  ExperimentConfig config;
  config.synth_items = items;
  config.synth_seed = 11;
  config.conditions = {"Medical Student", "Baseline"};
  config.backend.kind = BackendKind::Planted;
  config.backend.seed = 5;
  config.backend.circuit_seed = 5;
  config.backend.circuit_fraction = 0.05;
  config.backend.flip_probability = 0.8;
  config.calibration_n = 50;
  config.cross_role = false;
  config.representation = false;
  config.layer_jsd = false;
  config.bootstrap_replicates = 1000;
  config.out_dir = out.string();
  return config;
}

// 4. planted-circuit positive control
void planted_control(Check& c) {
  TempDir tmp;
  auto config = planted_config(tmp.path(), 200);
  config.random_seeds = 5;
  const auto a = run_experiment(config);
  c.expect(a.ablation.size() == 1, "expected one role ablation");
  if (a.ablation.empty()) return;
  const auto& row = a.ablation.front();
  const double role_drop = row.unmasked - row.role_diff;
  int wins = 0;
  for (double acc : row.random) wins += role_drop > row.unmasked - acc ? 1 : 0;
  c.expect(row.random.size() == 5, "expected 5 random seeds");
  c.expect(wins >= 4, "role drop beat random in only " + std::to_string(wins) + " of 5 seeds");

  Engine engine = Engine::from_config(config, resolve_corpus(config));
  const auto conditions = resolve_conditions(config);
  const AblationPlan empty;
  const auto plain = engine.evaluate(conditions.front()).run;
  const auto identity = engine.evaluate(conditions.front(), &empty).run;
  bool same = plain.outcomes.size() == identity.outcomes.size();
  for (std::size_t i = 0; same && i < plain.outcomes.size(); ++i) {
    same = plain.outcomes[i].choice == identity.outcomes[i].choice;
  }
  c.expect(same && accuracy(plain) == row.unmasked, "empty plan changed the accuracy");
}

// 5. dose-response monotonicity
void dose_response(Check& c) {
  TempDir tmp;
  auto config = planted_config(tmp.path(), 100);
  config.backend.model.layers = 8;
  config.random_seeds = 1;
  config.sweep = SweepGrid{};
  const auto a = run_experiment(config);
  c.expect(a.sweep.size() == 9, "sweep has " + std::to_string(a.sweep.size()) + " cells");
  if (a.sweep.size() != 9) return;
  auto at = [&](int i, int j) { return a.sweep[static_cast<std::size_t>(3 * i + j)].accuracy; };
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (j + 1 < 3) c.expect(at(i, j + 1) <= at(i, j) + 0.01, "accuracy rises along a row");
      if (i + 1 < 3) c.expect(at(i + 1, j) <= at(i, j) + 0.01, "accuracy rises along a column");
    }
  }
  c.expect(at(2, 2) < a.ablation.front().unmasked, "strongest cell does not lower accuracy");
}

// 6. end-to-end determinism
void determinism(Check& c) {
  TempDir tmp;
  ExperimentConfig config;
  config.synth_items = 50;
  config.conditions = {"Medical Student", "Baseline", "Random"};
  config.calibration_n = 50;
  config.out_dir = (tmp / "first").string();
  run_experiment(config);
  const auto first = hash_tree(run_directory(config, resolve_corpus(config)));
  config.out_dir = (tmp / "second").string();
  run_experiment(config);
  const auto second = hash_tree(run_directory(config, resolve_corpus(config)));
  c.expect(!first.empty() && first == second, "artifact directories differ");
  std::size_t svgs = 0;
  for (const auto& [name, hash] : first) svgs += name.ends_with(".svg") ? 1 : 0;
  c.expect(svgs >= 3, "run produced fewer than 3 SVG figures");
}

// 7. report fidelity fixture
void report_fixture(Check& c) {
  TempDir tmp;
  emit_report(read_artifacts(kFixtures / "table1_artifacts.json"), tmp.path());
  const std::string table = slurp(tmp / "accuracy_table.csv");
  c.expect(table == slurp(kFixtures / "table1_accuracy_table.csv"), "accuracy table differs from fixture");
  c.expect(table.find("Deepseek-R1,Reasoning base(MoE),0.8939,0.8900,") != std::string::npos,
           "Deepseek-R1 / Medical Student cell is not 0.8939");
}

// 8. activation-exchange round-trip
void exchange_roundtrip(Check& c) {
  TempDir tmp;
  gen::Rng rng(808);
  for (int i = 0; i < 100; ++i) {
    const auto s = gen::hidden_states(rng);
    write_states(s, tmp / "s.rpna");
    const auto back = read_states(tmp / "s.rpna");
    c.expect(encode_states(back) == encode_states(s) && back == s, "states changed on round-trip");
  }
  c.expect_throw<FormatError>([] { read_states(kFixtures / "bad_magic.rpna"); }, "bad magic accepted");
  c.expect_throw<TruncationError>([] { read_states(kFixtures / "truncated.rpna"); }, "truncated payload accepted");
  c.expect_throw<FormatError>([] { read_states(kFixtures / "bad_version.rpna"); }, "bad version accepted");
}

// 9. remote-backend conformance
void remote_conformance(Check& c) {
  gen::Rng rng(909);
  const auto states = gen::hidden_states(rng, 4, 5, 64);
  WireServer server([&](const WireRequest& r) {
    if (r.prompt == "slow") std::this_thread::sleep_for(1500ms);
    const auto& s = r.prompt == "narrow" ? HiddenStates(4, 5, 32) : states;
    return WireResponse{"The answer is B.", base64_encode(encode_states(s)), std::nullopt, std::nullopt};
  });
  const int port = server.start();
  RemoteBackend backend("http://127.0.0.1:" + std::to_string(port), 400ms, {"stub", 4, 64, 8});
  const auto r = backend.generate("question", true);
  c.expect(r.text == "The answer is B.", "stubbed text not returned");
  c.expect(r.prompt_states && *r.prompt_states == states, "activations not returned intact");
  c.expect_throw<ShapeMismatchError>([&] { backend.generate("narrow", true); }, "shape mismatch not raised");
  c.expect_throw<TimeoutError>([&] { backend.generate("slow", false); }, "timeout not raised");
  server.stop();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "metric invariant suite", 10, metric_invariants},
      {2, "statistics fixtures", 1, statistics_fixtures},
      {3, "salience oracle equivalence", 5, salience_oracle},
      {4, "planted-circuit positive control", 120, planted_control},
      {5, "dose-response monotonicity", 300, dose_response},
      {6, "end-to-end determinism", 120, determinism},
      {7, "report fidelity fixture", 1, report_fixture},
      {8, "activation-exchange round-trip", 5, exchange_roundtrip},
      {9, "remote-backend conformance", 10, remote_conformance},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (check.failure.empty() && secs > cr.budget_s) {
      check.failure = "took " + fmt(secs) + " s, budget " + fmt(cr.budget_s) + " s";
    }
    const bool ok = check.failure.empty();
    failed += ok ? 0 : 1;
    std::printf("%s criterion %d: %s (%.2f s)%s%s\n", ok ? "PASS" : "FAIL", cr.id, cr.name, secs,
                ok ? "" : " - ", check.failure.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
