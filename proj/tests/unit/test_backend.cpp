#include <string>

#include "doctest.h"
#include "generators.hpp"
#include "rpna/error.hpp"
#include "rpna/transformer.hpp"

using namespace rpna;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.layers = 3;
  c.dims = 16;
  c.heads = 2;
  c.ff = 32;
  c.context = 128;
  c.max_tokens = 4;
  return c;
}

std::string random_prompt(gen::Rng& rng) {
  std::string s;
  for (int i = gen::integer(rng, 1, 40); i > 0; --i) s += static_cast<char>(gen::integer(rng, 32, 126));
  return s;
}

AblationPlan random_mask(gen::Rng& rng, int layers, int dims) {
  AblationPlan plan;
  const int layer = gen::integer(rng, 1, layers);
  std::vector<int> ds;
  for (int d = 0; d < dims; ++d) {
    if (gen::integer(rng, 0, 2) == 0) ds.push_back(d);
  }
  if (ds.empty()) ds.push_back(0);
  plan.entries[layer] = ds;
  return plan;
}

}  // namespace

TEST_SUITE("backend") {
  TEST_CASE("reference backend has the declared shape") {
    ReferenceBackend b(1);
    CHECK(b.descriptor().layers == 4);
    CHECK(b.descriptor().dims == 64);
    const auto r = b.generate("Which option? A. x B. y", true);
    REQUIRE(r.prompt_states.has_value());
    CHECK(r.prompt_states->layers() == 4);
    CHECK(r.prompt_states->tokens() == 23);
    CHECK(r.prompt_states->dims() == 64);
    CHECK_NOTHROW(check_states_shape(*r.prompt_states, b.descriptor()));
    CHECK_FALSE(b.generate("abc", false).prompt_states.has_value());
  }

  TEST_CASE("same seed gives identical output, different seeds share a descriptor") {
    ReferenceBackend a(7, small()), b(7, small()), c(8, small());
    CHECK(a.model().parameters() == b.model().parameters());
    CHECK(a.generate("hello there", true) == b.generate("hello there", true));
    CHECK(a.descriptor() == c.descriptor());
    CHECK(a.model().parameters() != c.model().parameters());
  }

  TEST_CASE("greedy determinism, identity plan and ablation locality") {
    gen::Rng rng(23);
    ReferenceBackend b(3, small());
    const AblationPlan empty;
    for (int trial = 0; trial < 20; ++trial) {
      const std::string prompt = random_prompt(rng);
      const auto plain = b.generate(prompt, true);
      CHECK(plain == b.generate(prompt, true));
      CHECK(plain == b.generate(prompt, true, &empty));

      const AblationPlan plan = random_mask(rng, 3, 16);
      const auto masked = b.generate(prompt, true, &plan);
      CHECK(masked == b.generate(prompt, true, &plan));
      const auto& s0 = *plain.prompt_states;
      const auto& s1 = *masked.prompt_states;
      const int layer = plan.entries.begin()->first;
      for (int l = 1; l < layer; ++l) {
        for (int t = 0; t < s0.tokens(); ++t) {
          for (int d = 0; d < s0.dims(); ++d) REQUIRE(s0.at(l, t, d) == s1.at(l, t, d));
        }
      }
      for (int d : plan.entries.begin()->second) {
        for (int t = 0; t < s1.tokens(); ++t) REQUIRE(s1.at(layer, t, d) == 0.0f);
      }
    }
  }

  TEST_CASE("masking every dim at a layer zeroes that layer") {
    ReferenceBackend b(5, small());
    AblationPlan plan;
    for (int d = 0; d < 16; ++d) plan.entries[2].push_back(d);
    const auto r = b.generate("zero me out", true, &plan);
    for (float v : r.prompt_states->row(2, 0)) CHECK(v == 0.0f);
    for (int t = 0; t < r.prompt_states->tokens(); ++t) {
      for (int d = 0; d < 16; ++d) REQUIRE(r.prompt_states->at(2, t, d) == 0.0f);
    }
  }

  TEST_CASE("invalid input is rejected") {
    ReferenceBackend b(5, small());
    AblationPlan plan;
    plan.entries[4] = {0};
    CHECK_THROWS_AS(b.generate("x", false, &plan), PlanError);
    plan.entries.clear();
    plan.entries[1] = {16};
    CHECK_THROWS_AS(b.generate("x", false, &plan), PlanError);
    CHECK_THROWS_AS(b.generate("", false), UsageError);
    CHECK_THROWS_AS(b.generate(std::string(200, 'x'), false), ContextLengthError);
  }

  TEST_CASE("shape check") {
    const BackendDescriptor d{"m", 2, 4, 8};
    CHECK_NOTHROW(check_states_shape(HiddenStates(2, 5, 4), d));
    CHECK_THROWS_AS(check_states_shape(HiddenStates(2, 5, 3), d), ShapeMismatchError);
    CHECK_THROWS_AS(check_states_shape(HiddenStates(3, 5, 4), d), ShapeMismatchError);
  }
}
