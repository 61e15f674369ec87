#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace equacode {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;  // omitted from the wire when unset
  std::optional<int> max_tokens;

  /// Throws UsageError when there are no messages.
  void validate() const;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_ms = 0.0;
  int attempt_count = 1;
};

/// Connection settings for one chat-completions endpoint. The API key is never
/// stored here; `auth_env` names the environment variable that holds it.
struct EndpointConfig {
  std::string name;
  std::string base_url;
  std::string model_id;
  std::string auth_env;
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  std::optional<double> default_temperature;

  void validate() const;
};

/// How a single attempt failed. Rate limits, 5xx and transport timeouts are
/// retried; everything else surfaces immediately.
enum class FailureClass {
  kTransient,    // 5xx, connection reset, timeout
  kRateLimited,  // 429
  kClientError,  // other 4xx
  kMalformed,    // 2xx with an unusable body
  kUnmatched,    // mock: no scripted answer
};

bool is_retryable(FailureClass failure);

struct TransportFailure {
  FailureClass failure = FailureClass::kTransient;
  int status = 0;
  std::string message;
  std::string raw_body;
  std::optional<std::chrono::milliseconds> retry_after;
};

using TransportResult = std::variant<ChatResponse, TransportFailure>;

/// One attempt against an endpoint. Implementations must be safe to call
/// concurrently.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual TransportResult post(const EndpointConfig& config, const ChatRequest& request) = 0;
  /// False for deterministic offline stand-ins.
  virtual bool is_live() const = 0;
};

struct RetryPolicy {
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  double jitter = 0.25;  // fraction of the nominal delay, drawn uniformly
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
};

/// Exponential backoff with bounded jitter. Successive delays never decrease.
class Backoff {
 public:
  Backoff(const RetryPolicy& policy, std::uint64_t seed);
  std::chrono::milliseconds next(std::optional<std::chrono::milliseconds> floor = std::nullopt);

 private:
  RetryPolicy policy_;
  std::uint64_t state_;
  int attempt_ = 0;
  std::chrono::milliseconds previous_{0};
};

/// A shareable endpoint handle: configuration, transport and per-endpoint
/// admission control that caps concurrent requests at max_in_flight.
class Endpoint {
 public:
  Endpoint(EndpointConfig config, std::shared_ptr<ChatTransport> transport, RetryPolicy retry = {});

  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  const EndpointConfig& config() const noexcept { return config_; }
  ChatTransport& transport() noexcept { return *transport_; }
  const RetryPolicy& retry_policy() const noexcept { return retry_; }
  bool is_live() const { return transport_->is_live(); }

  /// Highest number of simultaneously admitted requests seen so far.
  int peak_in_flight() const;
  /// Total attempts sent through this endpoint.
  std::int64_t attempts() const;

 private:
  friend ChatResponse send_chat(Endpoint& endpoint, const ChatRequest& request);

  class Admission;

  EndpointConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  RetryPolicy retry_;
  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
  int peak_ = 0;
  std::int64_t attempts_ = 0;
};

/// Sends a request with retries. Throws EndpointError on missing credentials,
/// non-retryable failures, or when retries are exhausted.
ChatResponse send_chat(Endpoint& endpoint, const ChatRequest& request);

/// Mock fingerprint: SHA-256 over the model id and the message contents.
std::string request_fingerprint(const ChatRequest& request);

/// A scripted reply: either content or a simulated failure.
struct MockOutcome {
  std::optional<std::string> content;
  FailureClass failure = FailureClass::kTransient;
  int status = 500;

  static MockOutcome reply(std::string text) { return MockOutcome{std::move(text)}; }
  static MockOutcome fail(FailureClass failure, int status) {
    return MockOutcome{std::nullopt, failure, status};
  }
};

/// Answers requests whose last user message contains `contains`.
struct MockRule {
  std::string contains;
  std::string response;
};

/// Script for the offline responder. Lookup order: fingerprint script,
/// responder callback, substring rules, default.
struct MockScript {
  /// Fingerprint -> outcomes consumed in order; the last one repeats.
  std::map<std::string, std::vector<MockOutcome>> by_fingerprint;
  std::function<std::optional<std::string>(const ChatRequest&)> responder;
  std::vector<MockRule> rules;
  std::optional<std::string> default_response;
  std::chrono::microseconds latency{0};

  /// Reads {"default": str, "rules": [{"contains", "response"}],
  /// "script": {fingerprint: str | [outcome...]}, "latency_ms": n}.
  static MockScript from_json(const nlohmann::json& spec);
};

class MockTransport : public ChatTransport {
 public:
  explicit MockTransport(MockScript script);

  TransportResult post(const EndpointConfig& config, const ChatRequest& request) override;
  bool is_live() const override { return false; }

  std::int64_t calls() const;

 private:
  MockScript script_;
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> consumed_;
  std::int64_t calls_ = 0;
};

/// Throws UsageError if the script has no entries and no default.
std::shared_ptr<MockTransport> make_mock(MockScript script);
std::shared_ptr<Endpoint> make_mock_endpoint(EndpointConfig config, MockScript script,
                                             RetryPolicy retry = {});

/// OpenAI-compatible chat-completions over HTTP(S) with bearer auth.
class HttpTransport : public ChatTransport {
 public:
  TransportResult post(const EndpointConfig& config, const ChatRequest& request) override;
  bool is_live() const override { return true; }
};

/// Request body in the chat-completions wire format.
nlohmann::json to_wire_json(const ChatRequest& request);
/// Classifies the HTTP status (429 rate limited; 408 and 5xx transient; other
/// 4xx client error), then parses `choices[0].message.content`,
/// `finish_reason` and `usage`. Returns a kMalformed failure carrying the raw
/// body when the shape is off.
TransportResult parse_wire_response(int status, const std::string& body,
                                    std::optional<std::chrono::milliseconds> retry_after = std::nullopt);

/// Named endpoints from a config file.
class EndpointRegistry {
 public:
  void add(std::shared_ptr<Endpoint> endpoint);
  std::shared_ptr<Endpoint> get(std::string_view name) const;  // throws UsageError
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<Endpoint>, std::less<>> endpoints_;
};

}  // namespace equacode
