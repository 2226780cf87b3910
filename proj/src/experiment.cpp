#include "rpna/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <set>
#include <thread>

#include "json_io.hpp"
#include "rpna/error.hpp"
#include "rpna/planted.hpp"
#include "rpna/remote.hpp"
#include "rpna/rng.hpp"

namespace rpna {

using nlohmann::json;

namespace {

// Reads fields from a JSON object and rejects keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw UsageError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw UsageError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw UsageError("unknown config key " + where_ + "." + key);
    }
  }

 private:
  const json& object_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string_view kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Reference: return "reference";
    case BackendKind::Planted: return "planted";
    case BackendKind::Remote: return "remote";
  }
  return "reference";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "reference") return BackendKind::Reference;
  if (text == "planted") return BackendKind::Planted;
  if (text == "remote") return BackendKind::Remote;
  throw UsageError("unknown backend kind '" + std::string(text) + "'");
}

std::string_view cka_name(CkaLayers c) { return c == CkaLayers::Last ? "last" : "mean-all"; }

CkaLayers parse_cka_layers(std::string_view text) {
  if (text == "last") return CkaLayers::Last;
  if (text == "mean-all") return CkaLayers::MeanAll;
  throw UsageError("unknown cka_layers '" + std::string(text) + "'");
}

json backend_to_json(const BackendSpec& b) {
  const auto& m = b.model;
  json out = {{"kind", kind_name(b.kind)},
              {"seed", b.seed},
              {"layers", m.layers},
              {"dims", m.dims},
              {"heads", m.heads},
              {"ff", m.ff},
              {"context", m.context},
              {"max_tokens", m.max_tokens}};
  if (b.kind == BackendKind::Planted) {
    out["circuit_layers"] = b.circuit_layers;
    out["circuit_fraction"] = b.circuit_fraction;
    out["circuit_seed"] = b.circuit_seed;
    out["flip_probability"] = b.flip_probability;
  }
  if (b.kind == BackendKind::Remote) {
    out["endpoint"] = b.endpoint;
    out["timeout_ms"] = b.timeout_ms;
  }
  return out;
}

BackendSpec backend_from_json(const json& j) {
  BackendSpec b;
  FieldReader r(j, "backend");
  std::string kind = "reference";
  r.get("kind", kind);
  b.kind = parse_backend_kind(kind);
  r.get("seed", b.seed);
  r.get("layers", b.model.layers);
  r.get("dims", b.model.dims);
  r.get("heads", b.model.heads);
  r.get("ff", b.model.ff);
  r.get("context", b.model.context);
  r.get("max_tokens", b.model.max_tokens);
  r.get("circuit_layers", b.circuit_layers);
  r.get("circuit_fraction", b.circuit_fraction);
  r.get("circuit_seed", b.circuit_seed);
  r.get("flip_probability", b.flip_probability);
  r.get("endpoint", b.endpoint);
  r.get("timeout_ms", b.timeout_ms);
  r.finish();
  return b;
}

json config_record(const ExperimentConfig& c, bool with_local) {
  json out;
  if (!c.corpus_path.empty()) {
    out["corpus"] = c.corpus_path;
  } else {
    out["synthetic"] = {{"items", c.synth_items}, {"options", c.synth_options}, {"seed", c.synth_seed}};
  }
  if (!c.conditions_path.empty()) out["conditions_path"] = c.conditions_path;
  out["conditions"] = c.conditions;
  out["backend"] = backend_to_json(c.backend);
  out["calibration_n"] = c.calibration_n;
  out["top_layers"] = c.top_layers;
  out["fraction"] = c.fraction;
  if (c.sweep) {
    out["sweep"] = {{"top_layers", c.sweep->top_layers}, {"fractions", c.sweep->fractions}};
    out["sweep_condition"] = c.sweep_condition;
  }
  out["cross_role"] = c.cross_role;
  out["random_seeds"] = c.random_seeds;
  out["seeds"] = {{"ablation", c.ablation_seed}, {"bootstrap", c.bootstrap_seed}, {"kmeans", c.kmeans_seed}};
  out["bootstrap_replicates"] = c.bootstrap_replicates;
  out["jsd_norm"] = to_string(c.jsd_norm);
  out["analysis_layer"] = c.analysis_layer ? json(*c.analysis_layer) : json(nullptr);
  out["cka_layers"] = cka_name(c.cka_layers);
  out["stages"] = {{"representation", c.representation}, {"layer_jsd", c.layer_jsd}};
  if (with_local) {
    out["workers"] = c.workers;
    if (!c.out_dir.empty()) out["out_dir"] = c.out_dir;
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Internal, "SHA-256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace

// ---- config -----------------------------------------------------------------

ExperimentConfig config_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  FieldReader r(doc, "config");
  r.get("corpus", c.corpus_path);
  if (const json* s = r.sub("synthetic")) {
    FieldReader sr(*s, "synthetic");
    sr.get("items", c.synth_items);
    sr.get("options", c.synth_options);
    sr.get("seed", c.synth_seed);
    sr.finish();
  }
  r.get("conditions_path", c.conditions_path);
  r.get("conditions", c.conditions);
  if (const json* b = r.sub("backend")) c.backend = backend_from_json(*b);
  r.get("calibration_n", c.calibration_n);
  r.get("top_layers", c.top_layers);
  r.get("fraction", c.fraction);
  if (const json* s = r.sub("sweep")) {
    SweepGrid grid;
    FieldReader sr(*s, "sweep");
    sr.get("top_layers", grid.top_layers);
    sr.get("fractions", grid.fractions);
    sr.finish();
    c.sweep = grid;
  }
  r.get("sweep_condition", c.sweep_condition);
  r.get("cross_role", c.cross_role);
  r.get("random_seeds", c.random_seeds);
  if (const json* s = r.sub("seeds")) {
    FieldReader sr(*s, "seeds");
    sr.get("ablation", c.ablation_seed);
    sr.get("bootstrap", c.bootstrap_seed);
    sr.get("kmeans", c.kmeans_seed);
    sr.finish();
  }
  r.get("bootstrap_replicates", c.bootstrap_replicates);
  std::string norm = "softmax";
  r.get("jsd_norm", norm);
  c.jsd_norm = parse_jsd_norm(norm);
  int layer = 0;
  r.get("analysis_layer", layer);
  if (layer != 0) c.analysis_layer = layer;
  std::string cka = "last";
  r.get("cka_layers", cka);
  c.cka_layers = parse_cka_layers(cka);
  if (const json* s = r.sub("stages")) {
    FieldReader sr(*s, "stages");
    sr.get("representation", c.representation);
    sr.get("layer_jsd", c.layer_jsd);
    sr.finish();
  }
  r.get("workers", c.workers);
  r.get("out_dir", c.out_dir);
  r.finish();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_text_file(path));
}

std::string config_to_json(const ExperimentConfig& config) {
  return dump_json(config_record(config, true), 2) + "\n";
}

std::string canonical_config(const ExperimentConfig& config) {
  return dump_json(config_record(config, false), 2) + "\n";
}

void validate_config(const ExperimentConfig& c) {
  const auto& m = c.backend.model;
  if (m.layers < 1 || m.dims < 1 || m.max_tokens < 1) throw UsageError("backend shape must be positive");
  if (c.backend.kind != BackendKind::Remote) {
    if (m.heads < 1 || m.dims % m.heads != 0) throw UsageError("dims must be divisible by heads");
    if (m.ff < 1 || m.context < 2) throw UsageError("ff and context must be positive");
  }
  if (c.backend.kind == BackendKind::Remote && c.backend.endpoint.empty()) {
    throw UsageError("remote backend needs an endpoint");
  }
  if (c.backend.timeout_ms < 1) throw UsageError("timeout_ms must be positive");
  if (c.corpus_path.empty() && (c.synth_items < 1 || c.synth_options < 2 || c.synth_options > 26)) {
    throw UsageError("synthetic corpus needs items >= 1 and options in [2, 26]");
  }
  if (c.calibration_n < 1) throw UsageError("calibration_n must be at least 1");
  if (c.top_layers < 1 || c.top_layers > m.layers) {
    throw UsageError("top_layers must lie in [1, " + std::to_string(m.layers) + "]");
  }
  if (!(c.fraction > 0.0 && c.fraction <= 1.0)) throw UsageError("fraction must lie in (0, 1]");
  if (c.sweep) {
    validate_grid(*c.sweep);
    if (c.sweep->top_layers.front() < 1 || c.sweep->top_layers.back() > m.layers) {
      throw UsageError("sweep layer counts exceed the backend's " + std::to_string(m.layers) + " layers");
    }
    if (!(c.sweep->fractions.front() > 0.0 && c.sweep->fractions.back() <= 1.0)) {
      throw UsageError("sweep fractions must lie in (0, 1]");
    }
  }
  if (c.random_seeds < 1) throw UsageError("random_seeds must be at least 1");
  if (c.bootstrap_replicates < 1000) throw UsageError("bootstrap_replicates must be at least 1000");
  if (c.analysis_layer && (*c.analysis_layer < 1 || *c.analysis_layer > m.layers)) {
    throw UsageError("analysis_layer outside the backend's layers");
  }
  if (c.workers < 1) throw UsageError("workers must be at least 1");
  if (c.backend.kind == BackendKind::Planted) {
    if (!(c.backend.flip_probability >= 0.0 && c.backend.flip_probability <= 1.0)) {
      throw UsageError("flip_probability must lie in [0, 1]");
    }
    if (!(c.backend.circuit_fraction > 0.0 && c.backend.circuit_fraction <= 1.0)) {
      throw UsageError("circuit_fraction must lie in (0, 1]");
    }
  }
}

std::string run_id(const ExperimentConfig& config, const Corpus& corpus) {
  const std::string digest = sha256_hex(serialize_corpus(corpus));
  return sha256_hex(canonical_config(config) + "corpus:" + digest).substr(0, 16);
}

std::filesystem::path default_out_root() {
  if (const char* env = std::getenv("RPNA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "rpna_out";
}

std::filesystem::path run_directory(const ExperimentConfig& config, const Corpus& corpus) {
  const std::filesystem::path root = config.out_dir.empty() ? default_out_root()
                                                            : std::filesystem::path(config.out_dir);
  return root / run_id(config, corpus);
}

// ---- corpus, conditions, backends -------------------------------------------

Corpus synth_corpus(int n_items, int n_options, std::uint64_t seed) {
  if (n_items < 1) throw UsageError("synthetic corpus needs at least one item");
  if (n_options < 2 || n_options > 26) throw UsageError("options must lie in [2, 26]");
  Corpus corpus;
  corpus.name = "synthetic";
  for (int i = 0; i < n_items; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05d", i);
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const long long x = 10 + static_cast<long long>(rng.below(90));
    const long long y = 10 + static_cast<long long>(rng.below(90));
    const long long step = 1 + static_cast<long long>(rng.below(3));

    QAItem item;
    item.id = id;
    item.question = "Which option equals " + std::to_string(x) + " + " + std::to_string(y) + "?";
    item.answer_index = static_cast<int>(stable_hash(item.id, seed) % static_cast<std::uint64_t>(n_options));
    for (int j = 0; j < n_options; ++j) {
      item.options.push_back(std::to_string(x + y + (j - item.answer_index) * step));
    }
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

Corpus resolve_corpus(const ExperimentConfig& config) {
  if (config.corpus_path.empty()) {
    return synth_corpus(config.synth_items, config.synth_options, config.synth_seed);
  }
  return load_corpus(config.corpus_path);
}

std::vector<PromptCondition> resolve_conditions(const ExperimentConfig& config) {
  const auto available = config.conditions_path.empty() ? builtin_conditions()
                                                        : load_conditions(config.conditions_path);
  auto chosen = config.conditions.empty() ? available : select_conditions(available, config.conditions);
  validate_conditions(chosen);
  return chosen;
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const Corpus& corpus) {
  switch (spec.kind) {
    case BackendKind::Reference:
      return make_reference_backend(spec.seed, spec.model);
    case BackendKind::Planted: {
      std::vector<int> layers = spec.circuit_layers;
      if (layers.empty()) {
        for (int l = 1; l <= std::min(4, spec.model.layers); ++l) layers.push_back(l);
      }
      auto circuit = random_circuit(spec.circuit_seed, layers, spec.circuit_fraction, spec.model.dims);
      auto backend = std::make_unique<PlantedBackend>(spec.seed, std::move(circuit),
                                                      spec.flip_probability, spec.model);
      backend->attach_corpus(corpus);
      return backend;
    }
    case BackendKind::Remote:
      return make_remote_backend(spec.endpoint, std::chrono::milliseconds(spec.timeout_ms),
                                 {"remote", spec.model.layers, spec.model.dims, spec.model.max_tokens});
  }
  throw Error(ErrorKind::Internal, "unhandled backend kind");
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out += static_cast<char>(std::tolower(u));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "condition" : out;
}

// ---- engine -----------------------------------------------------------------

Engine::Engine(Corpus corpus, std::vector<std::unique_ptr<Backend>> workers)
    : corpus_(std::move(corpus)), workers_(std::move(workers)) {
  if (workers_.empty()) throw UsageError("engine needs at least one backend");
  if (corpus_.items.empty()) throw DataError("engine needs a non-empty corpus");
}

Engine Engine::from_config(const ExperimentConfig& config, Corpus corpus) {
  std::vector<std::unique_ptr<Backend>> workers;
  for (int w = 0; w < config.workers; ++w) workers.push_back(make_backend(config.backend, corpus));
  return Engine(std::move(corpus), std::move(workers));
}

Engine::Evaluation Engine::evaluate(const PromptCondition& condition, const AblationPlan* plan,
                                    std::size_t capture_n) {
  const std::size_t n = corpus_.items.size();
  capture_n = std::min(capture_n, n);
  Evaluation out;
  out.run.condition = condition.name;
  if (plan != nullptr && !plan->is_identity()) out.run.ablation = plan->provenance.tag();
  out.run.outcomes.resize(n);
  out.pooled.resize(capture_n);
  std::vector<std::exception_ptr> failures(n);

  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers_.size()) {
      try {
        const auto& item = corpus_.items[i];
        const auto prompt = render_prompt(condition, item);
        auto result = workers_[w]->generate(prompt.text, i < capture_n, plan);
        if (i < capture_n) {
          if (!result.prompt_states) throw ProtocolError("backend returned no states");
          check_states_shape(*result.prompt_states, workers_[w]->descriptor());
          out.pooled[i] = pool_states(*result.prompt_states);
        }
        auto choice = extract_choice(result.text, item.n_options());
        out.run.outcomes[i] = {item.id, choice, choice && *choice == item.answer_index};
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  if (workers_.size() == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers_.size(); ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

std::vector<PooledStates> Engine::capture(const PromptCondition& condition, std::size_t n) {
  n = std::min(n, corpus_.items.size());
  std::vector<PooledStates> pooled(n);
  std::vector<std::exception_ptr> failures(n);
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers_.size()) {
      try {
        const auto prompt = render_prompt(condition, corpus_.items[i]);
        auto result = workers_[w]->generate(prompt.text, true, nullptr);
        if (!result.prompt_states) throw ProtocolError("backend returned no states");
        check_states_shape(*result.prompt_states, workers_[w]->descriptor());
        pooled[i] = pool_states(*result.prompt_states);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  if (workers_.size() == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers_.size(); ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return pooled;
}

DeltaProfile calibrate(const std::vector<PooledStates>& role,
                       const std::vector<PooledStates>& baseline) {
  if (role.size() != baseline.size()) throw ShapeError("calibration sets differ in size");
  ProfileAccumulator acc;
  for (std::size_t i = 0; i < role.size(); ++i) acc.add(activation_delta(role[i], baseline[i]));
  return acc.finish();
}

// ---- pooled-state dumps -------------------------------------------------------

void write_pooled(const std::vector<PooledStates>& pooled, const std::filesystem::path& path) {
  if (pooled.empty()) throw DataError("no pooled states to write");
  const int layers = static_cast<int>(pooled.front().size());
  const int dims = layers > 0 ? static_cast<int>(pooled.front().front().size()) : 0;
  const int items = static_cast<int>(pooled.size());
  HiddenStates states(layers, items, dims);
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(layers) * items * dims);
  for (int l = 0; l < layers; ++l) {
    for (const auto& item : pooled) {
      if (static_cast<int>(item.size()) != layers || static_cast<int>(item[l].size()) != dims) {
        throw ShapeError("pooled states differ in shape");
      }
      for (double v : item[l]) values.push_back(static_cast<float>(v));
    }
  }
  write_states(HiddenStates(layers, items, dims, std::move(values)), path);
}

std::vector<PooledStates> read_pooled(const std::filesystem::path& path) {
  const HiddenStates states = read_states(path);
  std::vector<PooledStates> pooled(static_cast<std::size_t>(states.tokens()),
                                   PooledStates(static_cast<std::size_t>(states.layers())));
  for (int t = 0; t < states.tokens(); ++t) {
    for (int l = 1; l <= states.layers(); ++l) {
      const auto row = states.row(l, t);
      pooled[t][l - 1].assign(row.begin(), row.end());
    }
  }
  return pooled;
}

}  // namespace rpna
