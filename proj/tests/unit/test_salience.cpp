#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "generators.hpp"
#include "oracles.hpp"
#include "rpna/error.hpp"
#include "rpna/salience.hpp"
#include "temp_dir.hpp"

using namespace rpna;

namespace {

/// Delta by direct loops: |mean_t role - mean_t base| per layer and dim.
LayerDeltas loop_delta(const HiddenStates& role, const HiddenStates& base) {
  LayerDeltas out(static_cast<std::size_t>(role.layers()));
  for (int l = 1; l <= role.layers(); ++l) {
    for (int d = 0; d < role.dims(); ++d) {
      double a = 0.0, b = 0.0;
      for (int t = 0; t < role.tokens(); ++t) a += role.at(l, t, d);
      for (int t = 0; t < base.tokens(); ++t) b += base.at(l, t, d);
      out[static_cast<std::size_t>(l - 1)].push_back(std::abs(a / role.tokens() - b / base.tokens()));
    }
  }
  return out;
}

HiddenStates scaled(const HiddenStates& s, float k) {
  std::vector<float> v(s.values().begin(), s.values().end());
  for (auto& x : v) x *= k;
  return HiddenStates(s.layers(), s.tokens(), s.dims(), std::move(v));
}

}  // namespace

TEST_SUITE("salience") {
  TEST_CASE("identical states give all-zero deltas") {
    gen::Rng rng(1);
    const auto s = gen::hidden_states(rng, 3, 5, 4);
    for (const auto& row : activation_delta(s, s)) {
      for (double v : row) CHECK(v == 0.0);
    }
  }

  TEST_CASE("a constant offset on one dim shows up only there") {
    gen::Rng rng(2);
    const auto base = gen::hidden_states(rng, 3, 6, 5);
    std::vector<float> v(base.values().begin(), base.values().end());
    HiddenStates role(3, 6, 5, v);
    for (int t = 0; t < 6; ++t) role.row(2, t)[3] += -2.5f;
    const auto d = activation_delta(role, base);
    for (int l = 0; l < 3; ++l) {
      for (int i = 0; i < 5; ++i) {
        if (l == 1 && i == 3) {
          CHECK(d[1][3] == doctest::Approx(2.5).epsilon(1e-5));
        } else {
          CHECK(d[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] == doctest::Approx(0.0).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("deltas match a direct loop with unequal token counts") {
    gen::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto role = gen::hidden_states(rng, 2, 3, 4);
      const auto base = gen::hidden_states(rng, 2, 5, 4);
      const auto got = activation_delta(role, base);
      const auto want = loop_delta(role, base);
      for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t d = 0; d < 4; ++d) CHECK(got[l][d] == doctest::Approx(want[l][d]).epsilon(1e-12));
      }
      const auto pooled = activation_delta(pool_states(role), pool_states(base));
      for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t d = 0; d < 4; ++d) CHECK(pooled[l][d] == got[l][d]);
      }
    }
    CHECK_THROWS_AS(activation_delta(HiddenStates(2, 3, 4), HiddenStates(2, 3, 5)), ShapeError);
    CHECK_THROWS_AS(activation_delta(HiddenStates(2, 3, 4), HiddenStates(3, 3, 4)), ShapeError);
  }

  TEST_CASE("profile accumulation") {
    const LayerDeltas a = {{1.0, 2.0}, {3.0, 5.0}};
    const LayerDeltas b = {{3.0, 0.0}, {1.0, 1.0}};
    const auto one = accumulate_profile(std::vector<LayerDeltas>{a});
    CHECK(one.per_layer_delta == a);
    CHECK(one.n_samples == 1);
    const auto two = accumulate_profile(std::vector<LayerDeltas>{a, b});
    CHECK(two.per_layer_delta == LayerDeltas{{2.0, 1.0}, {2.0, 3.0}});
    CHECK(two.layer_sensitivity == std::vector<double>{1.5, 2.5});
    CHECK_THROWS_AS(ProfileAccumulator{}.finish(), DataError);

    gen::Rng rng(4);
    std::vector<LayerDeltas> samples;
    for (int i = 0; i < 10; ++i) samples.push_back(gen::profile(rng, 3, 7, false).per_layer_delta);
    const auto p = accumulate_profile(samples);
    for (std::size_t l = 0; l < 3; ++l) {
      double s = 0.0;
      for (std::size_t d = 0; d < 7; ++d) {
        double m = 0.0;
        for (const auto& smp : samples) m += smp[l][d];
        s += m / 10.0;
      }
      CHECK(p.layer_sensitivity[l] == doctest::Approx(s / 7.0).epsilon(1e-12));
    }
  }

  TEST_CASE("worked selection example") {
    const LayerDeltas d = {{1, 2, 3, 4}, {5, 5, 5, 5}, {0, 0, 0, 9}};
    const auto p = accumulate_profile(std::vector<LayerDeltas>{d});
    CHECK(p.layer_sensitivity == std::vector<double>{2.5, 5.0, 2.25});
    const auto set = select_neurons(p, 2, 0.5, "X");
    CHECK(set.entries == LayerDims{{1, {2, 3}}, {2, {0, 1}}});
    CHECK(set.entries == oracle::brute_force_select(d, 2, 0.5));
    CHECK(set.source_condition == "X");
    CHECK(set.size() == 4);
  }

  TEST_CASE("exhaustive and all-zero selections") {
    gen::Rng rng(5);
    const auto p = gen::profile(rng, 3, 6, false);
    const auto all = select_neurons(p, 3, 1.0);
    CHECK(all.size() == 18);
    const auto zero = accumulate_profile(std::vector<LayerDeltas>{LayerDeltas(5, std::vector<double>(10, 0.0))});
    const auto z = select_neurons(zero, 3, 0.25);
    CHECK(z.entries == LayerDims{{1, {0, 1, 2}}, {2, {0, 1, 2}}, {3, {0, 1, 2}}});
  }

  TEST_CASE("selection equals the brute-force oracle") {
    gen::Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = gen::profile(rng, 6, 32, trial % 2 == 0);
      for (int k = 1; k <= 6; ++k) {
        for (double r : {0.05, 0.25, 1.0}) {
          REQUIRE(select_neurons(p, k, r).entries == oracle::brute_force_select(p.per_layer_delta, k, r));
        }
      }
    }
  }

  TEST_CASE("scaling both conditions scales deltas and keeps the selection") {
    gen::Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const auto role = gen::hidden_states(rng, 4, 5, 16);
      const auto base = gen::hidden_states(rng, 4, 7, 16);
      const float lambda = 4.0f;
      const auto d1 = activation_delta(role, base);
      const auto d2 = activation_delta(scaled(role, lambda), scaled(base, lambda));
      for (std::size_t l = 0; l < 4; ++l) {
        for (std::size_t i = 0; i < 16; ++i) CHECK(d2[l][i] == doctest::Approx(lambda * d1[l][i]).epsilon(1e-9));
      }
      const auto p1 = accumulate_profile(std::vector<LayerDeltas>{d1});
      const auto p2 = accumulate_profile(std::vector<LayerDeltas>{d2});
      CHECK(select_neurons(p1, 2, 0.25).entries == select_neurons(p2, 2, 0.25).entries);
    }
  }

  TEST_CASE("permuting dims permutes the selection") {
    gen::Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      const auto p = gen::profile(rng, 4, 12, false);
      std::vector<int> perm(12);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      LayerDeltas q = p.per_layer_delta;
      for (std::size_t l = 0; l < q.size(); ++l) {
        for (std::size_t d = 0; d < 12; ++d) q[l][static_cast<std::size_t>(perm[d])] = p.per_layer_delta[l][d];
      }
      const auto a = select_neurons(p, 2, 0.25);
      const auto b = select_neurons(accumulate_profile(std::vector<LayerDeltas>{q}), 2, 0.25);
      LayerDims mapped;
      for (const auto& [l, ds] : a.entries) {
        for (int d : ds) mapped[l].push_back(perm[static_cast<std::size_t>(d)]);
        std::sort(mapped[l].begin(), mapped[l].end());
      }
      CHECK(mapped == b.entries);
    }
  }

  TEST_CASE("larger fractions select supersets") {
    gen::Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
      const auto p = gen::profile(rng, 5, 20, trial % 2 == 1);
      const auto small = select_neurons(p, 3, 0.1);
      const auto large = select_neurons(p, 3, 0.3);
      for (const auto& [l, ds] : small.entries) {
        REQUIRE(large.entries.count(l) == 1);
        CHECK(std::includes(large.entries.at(l).begin(), large.entries.at(l).end(), ds.begin(), ds.end()));
      }
    }
  }

  TEST_CASE("parameter checks and persistence") {
    gen::Rng rng(10);
    const auto p = gen::profile(rng, 3, 8, false);
    CHECK_THROWS_AS(select_neurons(p, 0, 0.5), UsageError);
    CHECK_THROWS_AS(select_neurons(p, 4, 0.5), UsageError);
    CHECK_THROWS_AS(select_neurons(p, 2, 0.0), UsageError);
    CHECK_THROWS_AS(select_neurons(p, 2, 1.5), UsageError);
    CHECK(neurons_per_layer(0.05, 64) == 4);
    CHECK(neurons_per_layer(0.03, 64) == 2);
    CHECK(neurons_per_layer(0.10, 64) == 7);
    const auto set = select_neurons(p, 2, 0.25, "Surgeon");
    CHECK(neuron_set_from_json(neuron_set_to_json(set)) == set);
    TempDir dir;
    write_neuron_set(set, dir / "n.json");
    CHECK(read_neuron_set(dir / "n.json") == set);
  }
}
