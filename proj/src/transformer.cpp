#include "rpna/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rpna/error.hpp"
#include "rpna/rng.hpp"

namespace rpna {

namespace {

constexpr float kLayerNormEps = 1e-5f;

void fill_uniform(SplitMix64& rng, float* out, std::size_t count, int fan_in, int fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<float>((2.0 * rng.uniform01() - 1.0) * a);
  }
}

void layer_norm(const float* x, float* out, int n) {
  float mean = 0.0f;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv;
}

// out[j] = sum_i x[i] * w[i * cols + j]
void matvec(const float* x, const float* w, float* out, int rows, int cols) {
  std::fill(out, out + cols, 0.0f);
  for (int i = 0; i < rows; ++i) {
    const float xi = x[i];
    const float* wrow = w + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[j] += xi * wrow[j];
  }
}

float gelu(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2 / pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

}  // namespace

MiniTransformer::MiniTransformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  const auto& c = config_;
  if (c.layers < 1 || c.dims < 1 || c.heads < 1 || c.dims % c.heads != 0 || c.ff < 1 ||
      c.context < 2 || c.vocab != 259 || c.max_tokens < 0) {
    throw UsageError("invalid model configuration");
  }
  const std::size_t d = static_cast<std::size_t>(c.dims);
  const std::size_t per_block = 4 * d * d + 2 * d * static_cast<std::size_t>(c.ff);
  params_.resize(c.vocab * d + c.context * d + c.layers * per_block + d * c.vocab);

  SplitMix64 rng(seed);
  float* p = params_.data();
  auto take = [&](std::size_t count, int fan_in, int fan_out) {
    fill_uniform(rng, p, count, fan_in, fan_out);
    const float* start = p;
    p += count;
    return start;
  };

  token_embedding_ = take(c.vocab * d, c.vocab, c.dims);
  position_embedding_ = take(c.context * d, c.context, c.dims);
  for (int l = 0; l < c.layers; ++l) {
    Block b{};
    b.wq = take(d * d, c.dims, c.dims);
    b.wk = take(d * d, c.dims, c.dims);
    b.wv = take(d * d, c.dims, c.dims);
    b.wo = take(d * d, c.dims, c.dims);
    b.up = take(d * c.ff, c.dims, c.ff);
    b.down = take(c.ff * d, c.ff, c.dims);
    blocks_.push_back(b);
  }
  unembedding_ = take(d * c.vocab, c.dims, c.vocab);
}

MiniTransformer::Output MiniTransformer::run(std::string_view prompt, bool capture,
                                             const AblationPlan* plan,
                                             int max_new_tokens) const {
  const auto& c = config_;
  const int d = c.dims;
  const int head_dim = d / c.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  const int prompt_len = static_cast<int>(prompt.size());

  if (prompt_len + 1 > c.context) {
    throw ContextLengthError("prompt of " + std::to_string(prompt_len) +
                             " bytes exceeds context length " + std::to_string(c.context - 1));
  }

  // Per-layer mask lists, indexed 0..L-1.
  std::vector<const std::vector<int>*> masks(static_cast<std::size_t>(c.layers), nullptr);
  if (plan != nullptr) {
    for (const auto& [layer, dims] : plan->entries) masks[static_cast<std::size_t>(layer - 1)] = &dims;
  }

  Output out;
  if (capture && prompt_len > 0) out.states.emplace(c.layers, prompt_len, d);

  const std::size_t cache_stride = static_cast<std::size_t>(c.context) * d;
  std::vector<float> keys(static_cast<std::size_t>(c.layers) * cache_stride);
  std::vector<float> values(keys.size());

  std::vector<float> x(d), h(d), q(d), attn(d), proj(d), up(c.ff), scores(c.context);
  std::vector<float> logits(c.vocab);

  auto step = [&](int token, int pos) {
    const float* te = token_embedding_ + static_cast<std::size_t>(token) * d;
    const float* pe = position_embedding_ + static_cast<std::size_t>(pos) * d;
    for (int i = 0; i < d; ++i) x[i] = te[i] + pe[i];

    for (int l = 0; l < c.layers; ++l) {
      const Block& b = blocks_[static_cast<std::size_t>(l)];
      float* kcache = keys.data() + l * cache_stride;
      float* vcache = values.data() + l * cache_stride;

      layer_norm(x.data(), h.data(), d);
      matvec(h.data(), b.wq, q.data(), d, d);
      matvec(h.data(), b.wk, kcache + static_cast<std::size_t>(pos) * d, d, d);
      matvec(h.data(), b.wv, vcache + static_cast<std::size_t>(pos) * d, d, d);

      for (int head = 0; head < c.heads; ++head) {
        const int off = head * head_dim;
        float max_score = -INFINITY;
        for (int j = 0; j <= pos; ++j) {
          const float* kj = kcache + static_cast<std::size_t>(j) * d + off;
          float s = 0.0f;
          for (int i = 0; i < head_dim; ++i) s += q[off + i] * kj[i];
          scores[j] = s * scale;
          max_score = std::max(max_score, scores[j]);
        }
        float total = 0.0f;
        for (int j = 0; j <= pos; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          total += scores[j];
        }
        for (int i = 0; i < head_dim; ++i) attn[off + i] = 0.0f;
        for (int j = 0; j <= pos; ++j) {
          const float w = scores[j] / total;
          const float* vj = vcache + static_cast<std::size_t>(j) * d + off;
          for (int i = 0; i < head_dim; ++i) attn[off + i] += w * vj[i];
        }
      }
      matvec(attn.data(), b.wo, proj.data(), d, d);
      for (int i = 0; i < d; ++i) x[i] += proj[i];

      layer_norm(x.data(), h.data(), d);
      matvec(h.data(), b.up, up.data(), d, c.ff);
      for (auto& u : up) u = gelu(u);
      matvec(up.data(), b.down, proj.data(), c.ff, d);
      for (int i = 0; i < d; ++i) x[i] += proj[i];

      if (const auto* m = masks[static_cast<std::size_t>(l)]) {
        for (int dim : *m) x[static_cast<std::size_t>(dim)] = 0.0f;
      }
      if (out.states && pos >= 1 && pos <= prompt_len) {
        auto row = out.states->row(l + 1, pos - 1);
        std::copy(x.begin(), x.end(), row.begin());
      }
    }
  };

  auto next_token = [&]() {
    layer_norm(x.data(), h.data(), d);
    matvec(h.data(), unembedding_, logits.data(), d, c.vocab);
    int best = -1;
    for (int v = 0; v < c.vocab; ++v) {
      // ASCII only, so decoded text is always valid UTF-8
      if (v == ModelConfig::kBos || v == ModelConfig::kPad || (v >= 128 && v < 256)) continue;
      if (best < 0 || logits[v] > logits[best]) best = v;
    }
    return best;
  };

  step(ModelConfig::kBos, 0);
  for (int t = 0; t < prompt_len; ++t) step(static_cast<unsigned char>(prompt[t]), t + 1);

  int pos = prompt_len + 1;
  for (int n = 0; n < max_new_tokens && pos < c.context; ++n, ++pos) {
    const int token = next_token();
    if (token == ModelConfig::kEos) break;
    out.tokens.push_back(token);
    step(token, pos);
  }
  return out;
}

ReferenceBackend::ReferenceBackend(std::uint64_t seed, const ModelConfig& config)
    : model_(config, seed),
      descriptor_{"reference", config.layers, config.dims,
                  config.max_tokens} {}

GenerationResult ReferenceBackend::generate(std::string_view prompt, bool capture_states,
                                            const AblationPlan* plan) {
  if (prompt.empty()) throw UsageError("prompt must be non-empty");
  if (plan != nullptr) validate_plan(*plan, descriptor_.layers, descriptor_.dims);

  auto out = model_.run(prompt, capture_states, plan, descriptor_.max_tokens);
  GenerationResult result;
  result.text.reserve(out.tokens.size());
  for (int t : out.tokens) result.text.push_back(static_cast<char>(t));
  result.token_count = static_cast<int>(out.tokens.size());
  result.prompt_states = std::move(out.states);
  return result;
}

std::unique_ptr<Backend> make_reference_backend(std::uint64_t seed, const ModelConfig& config) {
  return std::make_unique<ReferenceBackend>(seed, config);
}

}  // namespace rpna
