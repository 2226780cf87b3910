#include "rpna/planted.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

#include "rpna/error.hpp"
#include "rpna/prompt.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

PlantedBackend::PlantedBackend(std::uint64_t seed, LayerDims circuit, double flip_probability,
                               const ModelConfig& config)
    : seed_(seed),
      circuit_(normalize_layer_dims(std::move(circuit))),
      flip_probability_(flip_probability),
      model_(config, seed),
      descriptor_{"planted", config.layers, config.dims, config.max_tokens} {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw UsageError("flip_probability must lie in [0, 1]");
  }
  AblationPlan as_plan{circuit_, {}};
  try {
    validate_plan(as_plan, config.layers, config.dims);
  } catch (const PlanError& e) {
    throw UsageError(std::string("circuit outside the model shape: ") + e.what());
  }
  circuit_size_ = as_plan.size();
  if (circuit_size_ == 0) throw UsageError("planted circuit is empty");

  for (const auto& [layer, dims] : circuit_) {
    for (int dim : dims) {
      SplitMix64 rng(derive_seed(seed_, (static_cast<std::uint64_t>(layer) << 32) | dim));
      const double magnitude = rng.uniform(0.5, 1.0);
      signal_weights_.push_back(static_cast<float>(rng.below(2) == 0 ? magnitude : -magnitude));
    }
  }
}

void PlantedBackend::attach_corpus(const Corpus& corpus) {
  block_index_.clear();
  answers_.clear();
  flip_rank_.assign(corpus.size(), 0);

  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& item = corpus.items[i];
    block_index_.emplace(question_block(item), i);
    answers_.push_back(item.answer_index);
    order.emplace_back(stable_hash(item.id, seed_), i);
  }
  std::sort(order.begin(), order.end());
  for (std::size_t r = 0; r < order.size(); ++r) flip_rank_[order[r].second] = r;
}

std::optional<PlantedBackend::ParsedPrompt> PlantedBackend::parse_multiple_choice(
    std::string_view prompt) {
  const std::string suffix = "\n" + std::string(kOutputConstraint);
  if (prompt.size() < suffix.size() ||
      prompt.substr(prompt.size() - suffix.size()) != suffix) {
    return std::nullopt;
  }
  std::string_view body = prompt.substr(0, prompt.size() - suffix.size());

  // Walk option lines backwards until the "A. " line.
  std::vector<std::string_view> lines;
  std::size_t end = body.size();
  for (;;) {
    if (end == 0) return std::nullopt;
    const auto nl = body.rfind('\n', end - 1);
    if (nl == std::string_view::npos) return std::nullopt;
    std::string_view line = body.substr(nl + 1, end - nl - 1);
    if (line.size() < 3 || line[0] < 'A' || line[0] > 'Z' || line[1] != '.' || line[2] != ' ') {
      return std::nullopt;
    }
    lines.push_back(line);
    end = nl;
    if (line[0] == 'A') break;
  }
  std::reverse(lines.begin(), lines.end());
  if (lines.size() < static_cast<std::size_t>(kMinOptions)) return std::nullopt;
  std::vector<std::string> options;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i][0] != static_cast<char>('A' + i)) return std::nullopt;
    options.emplace_back(lines[i].substr(3));
  }

  std::string_view head = body.substr(0, end);
  const auto gap = head.rfind("\n\n");
  ParsedPrompt parsed;
  parsed.question = std::string(gap == std::string_view::npos ? head : head.substr(gap + 2));
  parsed.block = std::string(gap == std::string_view::npos ? body : body.substr(gap + 2));
  parsed.options = std::move(options);
  parsed.context_bytes = gap == std::string_view::npos ? 0 : gap;
  return parsed;
}

std::optional<int> PlantedBackend::correct_answer(const ParsedPrompt& parsed,
                                                  std::optional<std::size_t> item) const {
  if (item) return answers_[*item];

  static const std::regex sum_pattern(R"((\d+) \+ (\d+))");
  std::smatch m;
  if (!std::regex_search(parsed.question, m, sum_pattern)) return std::nullopt;
  const long long target = std::stoll(m[1].str()) + std::stoll(m[2].str());
  for (std::size_t i = 0; i < parsed.options.size(); ++i) {
    if (trim(parsed.options[i]) == std::to_string(target)) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::size_t PlantedBackend::masked_circuit_count(const AblationPlan* plan) const {
  if (plan == nullptr) return 0;
  std::size_t n = 0;
  for (const auto& [layer, dims] : circuit_) {
    for (int dim : dims) n += plan->masks(layer, dim) ? 1 : 0;
  }
  return n;
}

void PlantedBackend::add_signal(HiddenStates& states, std::size_t context_bytes,
                                const AblationPlan* plan) const {
  const int context = std::min(static_cast<int>(context_bytes), states.tokens());
  std::size_t k = 0;
  for (const auto& [layer, dims] : circuit_) {
    for (int dim : dims) {
      const float w = kSignalAmplitude * signal_weights_[k++];
      if (plan != nullptr && plan->masks(layer, dim)) continue;
      for (int t = 0; t < context; ++t) states.row(layer, t)[static_cast<std::size_t>(dim)] += w;
    }
  }
}

GenerationResult PlantedBackend::generate(std::string_view prompt, bool capture_states,
                                          const AblationPlan* plan) {
  if (prompt.empty()) throw UsageError("prompt must be non-empty");
  if (plan != nullptr) validate_plan(*plan, descriptor_.layers, descriptor_.dims);

  std::optional<int> answer;
  std::optional<ParsedPrompt> parsed = parse_multiple_choice(prompt);
  std::optional<std::size_t> item;
  if (parsed) {
    if (auto it = block_index_.find(parsed->block); it != block_index_.end()) item = it->second;
    answer = correct_answer(*parsed, item);
  }

  GenerationResult result;
  if (!answer) {
    auto out = model_.run(prompt, capture_states, plan, descriptor_.max_tokens);
    for (int t : out.tokens) result.text.push_back(static_cast<char>(t));
    result.token_count = static_cast<int>(out.tokens.size());
    result.prompt_states = std::move(out.states);
  } else {
    if (capture_states) result.prompt_states = model_.run(prompt, true, plan, 0).states;

    const std::size_t masked = masked_circuit_count(plan);
    const int n = static_cast<int>(parsed->options.size());
    bool flip = false;
    if (masked > 0 && flip_probability_ > 0.0) {
      if (item) {
        const double expected = static_cast<double>(masked) * flip_probability_ *
                                static_cast<double>(flip_rank_.size()) /
                                static_cast<double>(circuit_size_);
        const auto count = static_cast<std::size_t>(std::ceil(expected - 1e-9));
        flip = flip_rank_[*item] < count;
      } else {
        const double u = static_cast<double>(stable_hash(parsed->block, seed_) >> 11) * 0x1.0p-53;
        flip = u * static_cast<double>(circuit_size_) <
               static_cast<double>(masked) * flip_probability_;
      }
    }
    int choice = *answer;
    if (flip) {
      const auto shift = 1 + stable_hash(parsed->block, seed_ ^ 0x5bd1e995ULL) % (n - 1);
      choice = static_cast<int>((choice + static_cast<int>(shift)) % n);
    }
    result.text = std::string(1, option_letter(choice));
    result.token_count = 1;
  }
  if (result.prompt_states) {
    std::size_t context = 0;
    if (parsed) {
      context = parsed->context_bytes;
    } else if (const auto gap = prompt.rfind("\n\n"); gap != std::string_view::npos) {
      context = gap;
    }
    add_signal(*result.prompt_states, context, plan);
  }
  return result;
}

LayerDims random_circuit(std::uint64_t seed, const std::vector<int>& layers, double fraction,
                         int dims) {
  const int count = neurons_per_layer(fraction, dims);
  if (count < 1 || count > dims) throw UsageError("circuit fraction selects no dims");
  LayerDims out;
  for (int layer : layers) {
    SplitMix64 rng(derive_seed(seed, 0xc1c0000ULL + static_cast<std::uint64_t>(layer)));
    std::vector<int> pool(static_cast<std::size_t>(dims));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < count; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(dims - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    out[layer] = std::move(chosen);
  }
  return out;
}

std::unique_ptr<PlantedBackend> make_planted_backend(std::uint64_t seed, const NeuronSet& circuit,
                                                     double flip_probability,
                                                     const ModelConfig& config) {
  return std::make_unique<PlantedBackend>(seed, circuit.entries, flip_probability, config);
}

}  // namespace rpna
