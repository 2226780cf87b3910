#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rpna/backend.hpp"

namespace httplib {
class Server;
}

namespace rpna {

// Wire protocol for POST /generate.
//   request:  {"prompt", "capture_states", "ablation": [{"layer", "dims"}], "max_tokens"}
//   response: {"text", "states_blob"?: base64 activation-exchange bytes, "error"?}

struct WireRequest {
  std::string prompt;
  bool capture_states = false;
  LayerDims ablation;
  int max_tokens = 0;

  bool operator==(const WireRequest&) const = default;
};

struct WireResponse {
  std::string text;
  std::optional<std::string> states_blob;
  std::optional<std::string> error;
  std::optional<int> token_count;
};

std::string encode_request(const WireRequest& request);
/// Throws ProtocolError on malformed input.
WireRequest decode_request(std::string_view body);
std::string encode_response(const WireResponse& response);
WireResponse decode_response(std::string_view body);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Client for a model served over the wire protocol. Returned activations
/// are checked against `descriptor` (L and d).
class RemoteBackend final : public Backend {
 public:
  RemoteBackend(std::string endpoint, std::chrono::milliseconds timeout,
                BackendDescriptor descriptor);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GenerationResult generate(std::string_view prompt, bool capture_states,
                            const AblationPlan* plan = nullptr) override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  BackendDescriptor descriptor_;
};

std::unique_ptr<Backend> make_remote_backend(std::string endpoint,
                                             std::chrono::milliseconds timeout,
                                             BackendDescriptor descriptor);

/// Minimal HTTP server speaking the wire protocol on POST /generate.
class WireServer {
 public:
  using Handler = std::function<WireResponse(const WireRequest&)>;

  explicit WireServer(Handler handler);
  ~WireServer();
  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds (port 0 = any free port), serves on a background thread and
  /// returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// Adapts a backend into a WireServer handler; calls are serialized.
WireServer::Handler serve_backend(Backend& backend);

}  // namespace rpna
