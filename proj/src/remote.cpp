#include "rpna/remote.hpp"

#include <array>
#include <mutex>

#include "httplib.h"
#include "json_io.hpp"
#include "rpna/error.hpp"

namespace rpna {

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

nlohmann::json parse_body(std::string_view body, const char* what) {
  try {
    auto doc = nlohmann::json::parse(body);
    if (!doc.is_object()) throw ProtocolError(std::string(what) + " is not a JSON object");
    return doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  }
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");

  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      int value = 0;
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw ProtocolError("misplaced base64 padding");
        ++pad;
      } else {
        if (pad > 0) throw ProtocolError("misplaced base64 padding");
        value = lookup[static_cast<unsigned char>(c)];
        if (value < 0) throw ProtocolError("invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(value);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string encode_request(const WireRequest& request) {
  nlohmann::json doc = {{"prompt", request.prompt},
                        {"capture_states", request.capture_states},
                        {"ablation", layer_dims_to_json(request.ablation)},
                        {"max_tokens", request.max_tokens}};
  return dump_json(doc);
}

WireRequest decode_request(std::string_view body) {
  const auto doc = parse_body(body, "request");
  WireRequest request;
  try {
    request.prompt = doc.at("prompt").get<std::string>();
    request.capture_states = doc.value("capture_states", false);
    if (auto it = doc.find("ablation"); it != doc.end() && !it->is_null()) {
      request.ablation = layer_dims_from_json(*it);
    }
    request.max_tokens = doc.value("max_tokens", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad request: ") + e.what());
  } catch (const DataError& e) {
    throw ProtocolError(std::string("bad request: ") + e.what());
  }
  return request;
}

std::string encode_response(const WireResponse& response) {
  nlohmann::json doc = {{"text", response.text}};
  if (response.states_blob) doc["states_blob"] = *response.states_blob;
  if (response.error) doc["error"] = *response.error;
  if (response.token_count) doc["token_count"] = *response.token_count;
  return dump_json(doc);
}

WireResponse decode_response(std::string_view body) {
  const auto doc = parse_body(body, "response");
  WireResponse response;
  try {
    if (auto it = doc.find("error"); it != doc.end() && !it->is_null()) {
      response.error = it->get<std::string>();
    }
    if (auto it = doc.find("text"); it != doc.end() && !it->is_null()) {
      response.text = it->get<std::string>();
    } else if (!response.error) {
      throw ProtocolError("response lacks 'text'");
    }
    if (auto it = doc.find("states_blob"); it != doc.end() && !it->is_null()) {
      response.states_blob = it->get<std::string>();
    }
    if (auto it = doc.find("token_count"); it != doc.end() && !it->is_null()) {
      response.token_count = it->get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad response: ") + e.what());
  }
  return response;
}

// ---- client ----------------------------------------------------------------

RemoteBackend::RemoteBackend(std::string endpoint, std::chrono::milliseconds timeout,
                             BackendDescriptor descriptor)
    : endpoint_(std::move(endpoint)), timeout_(timeout), descriptor_(std::move(descriptor)) {
  if (descriptor_.layers < 1 || descriptor_.dims < 1) {
    throw UsageError("remote backend needs a descriptor with L, d >= 1");
  }
  if (timeout_.count() <= 0) throw UsageError("remote timeout must be positive");
}

GenerationResult RemoteBackend::generate(std::string_view prompt, bool capture_states,
                                         const AblationPlan* plan) {
  if (prompt.empty()) throw UsageError("prompt must be non-empty");
  WireRequest request;
  request.prompt = std::string(prompt);
  request.capture_states = capture_states;
  if (plan != nullptr) {
    validate_plan(*plan, descriptor_.layers, descriptor_.dims);
    request.ablation = plan->entries;
  }
  request.max_tokens = descriptor_.max_tokens;

  httplib::Client client(endpoint_);
  if (!client.is_valid()) throw ConnectionError("invalid endpoint '" + endpoint_ + "'");
  const auto sec = static_cast<time_t>(timeout_.count() / 1000);
  const auto usec = static_cast<time_t>((timeout_.count() % 1000) * 1000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post("/generate", encode_request(request), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const std::string detail = endpoint_ + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout ||
        ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= timeout_)) {
      throw TimeoutError("timed out talking to " + detail);
    }
    throw ConnectionError("connection to " + detail);
  }

  WireResponse response;
  try {
    response = decode_response(res->body);
  } catch (const ProtocolError&) {
    if (res->status != 200) {
      throw ProtocolError("HTTP status " + std::to_string(res->status) + " from " + endpoint_);
    }
    throw;
  }
  if (response.error) throw BackendError("remote backend error: " + *response.error);
  if (res->status != 200) {
    throw ProtocolError("HTTP status " + std::to_string(res->status) + " from " + endpoint_);
  }

  GenerationResult result;
  result.text = std::move(response.text);
  result.token_count = response.token_count.value_or(static_cast<int>(result.text.size()));
  if (capture_states) {
    if (!response.states_blob) throw ProtocolError("activations requested but not returned");
    HiddenStates states;
    try {
      states = decode_states(base64_decode(*response.states_blob));
    } catch (const DataError& e) {
      throw ProtocolError(std::string("invalid activation blob: ") + e.what());
    }
    check_states_shape(states, descriptor_);
    result.prompt_states = std::move(states);
  }
  return result;
}

std::unique_ptr<Backend> make_remote_backend(std::string endpoint,
                                             std::chrono::milliseconds timeout,
                                             BackendDescriptor descriptor) {
  return std::make_unique<RemoteBackend>(std::move(endpoint), timeout, std::move(descriptor));
}

// ---- server ----------------------------------------------------------------

WireServer::WireServer(Handler handler) : server_(std::make_unique<httplib::Server>()) {
  server_->Post("/generate", [handler = std::move(handler)](const httplib::Request& req,
                                                            httplib::Response& res) {
    WireResponse response;
    try {
      response = handler(decode_request(req.body));
    } catch (const ProtocolError& e) {
      res.status = 400;
      response = {};
      response.error = e.what();
    } catch (const std::exception& e) {
      res.status = 500;
      response = {};
      response.error = e.what();
    }
    res.set_content(encode_response(response), "application/json");
  });
}

WireServer::~WireServer() { stop(); }

int WireServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw ConnectionError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void WireServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw ConnectionError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void WireServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

WireServer::Handler serve_backend(Backend& backend) {
  auto mutex = std::make_shared<std::mutex>();
  return [&backend, mutex](const WireRequest& request) {
    std::lock_guard lock(*mutex);
    AblationPlan plan{request.ablation, {}};
    auto out = backend.generate(request.prompt, request.capture_states,
                                plan.is_identity() ? nullptr : &plan);
    WireResponse response;
    response.text = std::move(out.text);
    response.token_count = out.token_count;
    if (out.prompt_states) response.states_blob = base64_encode(encode_states(*out.prompt_states));
    return response;
  };
}

}  // namespace rpna
