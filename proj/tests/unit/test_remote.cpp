#include <chrono>
#include <string>
#include <thread>

#include "doctest.h"
#include "generators.hpp"
#include "rpna/error.hpp"
#include "rpna/remote.hpp"
#include "rpna/states.hpp"
#include "rpna/transformer.hpp"

using namespace rpna;
using namespace std::chrono_literals;

namespace {

std::string endpoint(int port) { return "http://127.0.0.1:" + std::to_string(port); }

std::string blob(const HiddenStates& s) { return base64_encode(encode_states(s)); }

std::string bytes_to_string(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::uint8_t> string_bytes(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_SUITE("remote") {
  TEST_CASE("base64 matches the standard test vectors") {
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"},
        {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
    for (const auto& [plain, coded] : vectors) {
      CHECK(base64_encode(string_bytes(plain)) == coded);
      CHECK(bytes_to_string(base64_decode(coded)) == plain);
    }
    CHECK_THROWS_AS(base64_decode("Zm9v!"), ProtocolError);
    CHECK_THROWS_AS(base64_decode("Zm9"), ProtocolError);
  }

  TEST_CASE("base64 round-trips random bytes") {
    gen::Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      std::vector<std::uint8_t> bytes(static_cast<std::size_t>(gen::integer(rng, 0, 70)));
      for (auto& b : bytes) b = static_cast<std::uint8_t>(gen::integer(rng, 0, 255));
      CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
  }

  TEST_CASE("wire messages round-trip") {
    WireRequest req{"prompt \"quoted\"\n", true, {{2, {1, 5}}, {4, {0}}}, 12};
    CHECK(decode_request(encode_request(req)) == req);
    WireResponse res{"B", std::string("AAAA"), std::nullopt, 1};
    const auto back = decode_response(encode_response(res));
    CHECK(back.text == "B");
    CHECK(back.states_blob == "AAAA");
    CHECK_FALSE(back.error.has_value());
    CHECK(back.token_count == 1);
    CHECK_THROWS_AS(decode_request("{"), ProtocolError);
    CHECK_THROWS_AS(decode_request(R"({"capture_states":true})"), ProtocolError);
    CHECK_THROWS_AS(decode_response("[1,2]"), ProtocolError);
  }

  TEST_CASE("stub server text and activations come back validated") {
    const HiddenStates states = [] {
      gen::Rng rng(2);
      return gen::hidden_states(rng, 4, 6, 64);
    }();
    WireRequest seen;
    WireServer server([&](const WireRequest& r) {
      seen = r;
      return WireResponse{"The answer is C.", blob(states), std::nullopt, std::nullopt};
    });
    const int port = server.start();
    RemoteBackend b(endpoint(port), 2000ms, {"stub", 4, 64, 8});
    AblationPlan plan;
    plan.entries[3] = {7, 9};
    const auto r = b.generate("question", true, &plan);
    CHECK(r.text == "The answer is C.");
    REQUIRE(r.prompt_states.has_value());
    CHECK(*r.prompt_states == states);
    CHECK(seen.prompt == "question");
    CHECK(seen.capture_states);
    CHECK(seen.ablation == plan.entries);
    CHECK(seen.max_tokens == 8);
    server.stop();
  }

  TEST_CASE("wrong activation width raises a shape mismatch") {
    WireServer server([](const WireRequest&) {
      return WireResponse{"A", blob(HiddenStates(4, 3, 32)), std::nullopt, std::nullopt};
    });
    const int port = server.start();
    RemoteBackend b(endpoint(port), 2000ms, {"stub", 4, 64, 8});
    CHECK_THROWS_AS(b.generate("q", true), ShapeMismatchError);
    CHECK(b.generate("q", false).text == "A");
    server.stop();
  }

  TEST_CASE("slow server raises a timeout") {
    WireServer server([](const WireRequest&) {
      std::this_thread::sleep_for(1500ms);
      return WireResponse{"late", std::nullopt, std::nullopt, std::nullopt};
    });
    const int port = server.start();
    RemoteBackend b(endpoint(port), 300ms, {"stub", 4, 64, 8});
    CHECK_THROWS_AS(b.generate("q", false), TimeoutError);
    server.stop();
  }

  TEST_CASE("unreachable endpoint raises a connection error") {
    int port = 0;
    {
      WireServer probe([](const WireRequest&) { return WireResponse{}; });
      port = probe.start();
      probe.stop();
    }
    RemoteBackend b(endpoint(port), 1000ms, {"stub", 4, 64, 8});
    CHECK_THROWS_AS(b.generate("q", false), ConnectionError);
  }

  TEST_CASE("server-side errors and missing activations") {
    WireServer server([](const WireRequest& r) {
      if (r.prompt == "fail") return WireResponse{"", std::nullopt, std::string("boom"), std::nullopt};
      return WireResponse{"A", std::nullopt, std::nullopt, std::nullopt};
    });
    const int port = server.start();
    RemoteBackend b(endpoint(port), 2000ms, {"stub", 4, 64, 8});
    CHECK_THROWS_AS(b.generate("fail", false), BackendError);
    CHECK_THROWS_AS(b.generate("ok", true), ProtocolError);
    server.stop();
  }

  TEST_CASE("a served reference backend matches the local one") {
    ModelConfig c;
    c.layers = 2;
    c.dims = 16;
    c.heads = 2;
    c.ff = 32;
    c.context = 64;
    c.max_tokens = 3;
    ReferenceBackend served(4, c), local(4, c);
    WireServer server(serve_backend(served));
    const int port = server.start();
    RemoteBackend remote(endpoint(port), 5000ms, served.descriptor());
    AblationPlan plan;
    plan.entries[1] = {0, 3};
    CHECK(remote.generate("hello", true) == local.generate("hello", true));
    CHECK(remote.generate("hello", true, &plan) == local.generate("hello", true, &plan));
    server.stop();
  }
}
