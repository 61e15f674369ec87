#include "equacode/client.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "equacode/error.hpp"
#include "equacode/util.hpp"

namespace equacode {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw DataError("unknown chat role '" + std::string(name) + "'");
}

void ChatRequest::validate() const {
  if (messages.empty()) throw UsageError("chat request has no messages");
}

void EndpointConfig::validate() const {
  if (name.empty()) throw UsageError("endpoint has no name");
  if (!(timeout_s > 0)) throw UsageError("endpoint '" + name + "': timeout must be positive");
  if (max_retries < 0) throw UsageError("endpoint '" + name + "': max_retries must be >= 0");
  if (max_in_flight < 1) throw UsageError("endpoint '" + name + "': max_in_flight must be >= 1");
}

bool is_retryable(FailureClass failure) {
  return failure == FailureClass::kTransient || failure == FailureClass::kRateLimited;
}

// ---------------------------------------------------------------------------
// Backoff

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Backoff::Backoff(const RetryPolicy& policy, std::uint64_t seed) : policy_(policy), state_(seed) {}

std::chrono::milliseconds Backoff::next(std::optional<std::chrono::milliseconds> floor) {
  const double nominal = std::min(static_cast<double>(policy_.max_delay.count()),
                                  static_cast<double>(policy_.base_delay.count()) *
                                      std::ldexp(1.0, std::min(attempt_, 30)));
  const double unit = static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
  auto delay = std::chrono::milliseconds(
      static_cast<std::int64_t>(std::llround(nominal * (1.0 + policy_.jitter * unit))));
  if (floor && *floor > delay) delay = *floor;
  delay = std::max(delay, previous_);
  previous_ = delay;
  ++attempt_;
  return delay;
}

// ---------------------------------------------------------------------------
// Endpoint

class Endpoint::Admission {
 public:
  explicit Admission(Endpoint& endpoint) : endpoint_(endpoint) {
    std::unique_lock lock(endpoint_.mutex_);
    endpoint_.slot_free_.wait(lock,
                              [&] { return endpoint_.in_flight_ < endpoint_.config_.max_in_flight; });
    ++endpoint_.in_flight_;
    endpoint_.peak_ = std::max(endpoint_.peak_, endpoint_.in_flight_);
  }
  ~Admission() {
    {
      std::lock_guard lock(endpoint_.mutex_);
      --endpoint_.in_flight_;
    }
    endpoint_.slot_free_.notify_one();
  }
  Admission(const Admission&) = delete;
  Admission& operator=(const Admission&) = delete;

 private:
  Endpoint& endpoint_;
};

Endpoint::Endpoint(EndpointConfig config, std::shared_ptr<ChatTransport> transport, RetryPolicy retry)
    : config_(std::move(config)), transport_(std::move(transport)), retry_(std::move(retry)) {
  config_.validate();
  if (!transport_) throw UsageError("endpoint '" + config_.name + "' has no transport");
  if (!retry_.sleep) {
    retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

int Endpoint::peak_in_flight() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

std::int64_t Endpoint::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

std::string request_fingerprint(const ChatRequest& request) {
  std::string material = request.model_id;
  for (const auto& message : request.messages) {
    material.push_back('\x1e');
    material += message.content;
  }
  return sha256_hex(material);
}

ChatResponse send_chat(Endpoint& endpoint, const ChatRequest& request) {
  request.validate();
  const EndpointConfig& config = endpoint.config_;
  if (!config.auth_env.empty() && endpoint.is_live() && std::getenv(config.auth_env.c_str()) == nullptr) {
    throw EndpointError(EndpointFailure::kAuthMissing,
                        "endpoint '" + config.name + "': environment variable " + config.auth_env +
                            " is not set");
  }

  const std::string fingerprint = request_fingerprint(request);
  Backoff backoff(endpoint.retry_, std::stoull(fingerprint.substr(0, 15), nullptr, 16));
  Endpoint::Admission admission(endpoint);

  const int max_attempts = config.max_retries + 1;
  for (int attempt = 1;; ++attempt) {
    const auto started = std::chrono::steady_clock::now();
    TransportResult result = endpoint.transport_->post(config, request);
    {
      std::lock_guard lock(endpoint.mutex_);
      ++endpoint.attempts_;
    }
    if (auto* response = std::get_if<ChatResponse>(&result)) {
      response->attempt_count = attempt;
      response->latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      return std::move(*response);
    }

    auto& failure = std::get<TransportFailure>(result);
    const std::string where = "endpoint '" + config.name + "'";
    auto fail = [&](EndpointFailure kind, const std::string& message) {
      EndpointError error(kind, message, failure.status, std::move(failure.raw_body));
      error.set_attempts(attempt);
      return error;
    };
    switch (failure.failure) {
      case FailureClass::kClientError:
        throw fail(EndpointFailure::kClientError,
                   where + ": HTTP " + std::to_string(failure.status) + ": " + failure.message);
      case FailureClass::kMalformed:
        throw fail(EndpointFailure::kMalformedResponse, where + ": " + failure.message);
      case FailureClass::kUnmatched:
        throw fail(EndpointFailure::kUnmatchedRequest, where + ": " + failure.message);
      case FailureClass::kTransient:
      case FailureClass::kRateLimited:
        break;
    }
    if (attempt >= max_attempts) {
      throw fail(EndpointFailure::kRetriesExhausted,
                 where + ": giving up after " + std::to_string(attempt) + " attempt(s): " + failure.message);
    }
    const auto delay = backoff.next(failure.retry_after);
    spdlog::debug("{}: attempt {} failed ({}), retrying in {} ms", where, attempt, failure.message,
                  delay.count());
    endpoint.retry_.sleep(delay);
  }
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::int64_t word_count(std::string_view text) {
  return static_cast<std::int64_t>(split_whitespace(text).size());
}

MockOutcome outcome_from_json(const json& spec) {
  if (spec.is_string()) return MockOutcome::reply(spec.get<std::string>());
  if (spec.is_object() && spec.contains("content")) {
    return MockOutcome::reply(spec.at("content").get<std::string>());
  }
  if (spec.is_object() && spec.contains("error")) {
    const std::string kind = spec.at("error").get<std::string>();
    if (kind == "server_error") return MockOutcome::fail(FailureClass::kTransient, spec.value("status", 500));
    if (kind == "rate_limit") return MockOutcome::fail(FailureClass::kRateLimited, 429);
    if (kind == "client_error") return MockOutcome::fail(FailureClass::kClientError, spec.value("status", 400));
    if (kind == "malformed") return MockOutcome::fail(FailureClass::kMalformed, 200);
    throw DataError("unknown mock error kind '" + kind + "'");
  }
  throw DataError("mock outcome must be a string, {\"content\": ...} or {\"error\": ...}");
}

}  // namespace

MockScript MockScript::from_json(const json& spec) {
  MockScript script;
  if (!spec.is_object()) throw DataError("mock specification must be an object");
  if (spec.contains("default") && !spec["default"].is_null()) {
    script.default_response = spec["default"].get<std::string>();
  }
  if (spec.contains("rules")) {
    for (const auto& rule : spec["rules"]) {
      script.rules.push_back({rule.at("contains").get<std::string>(), rule.at("response").get<std::string>()});
    }
  }
  if (spec.contains("script")) {
    for (const auto& [fingerprint, value] : spec["script"].items()) {
      std::vector<MockOutcome> outcomes;
      if (value.is_array()) {
        for (const auto& item : value) outcomes.push_back(outcome_from_json(item));
      } else {
        outcomes.push_back(outcome_from_json(value));
      }
      script.by_fingerprint.emplace(fingerprint, std::move(outcomes));
    }
  }
  if (spec.contains("latency_ms")) {
    script.latency = std::chrono::microseconds(
        static_cast<std::int64_t>(spec["latency_ms"].get<double>() * 1000.0));
  }
  return script;
}

MockTransport::MockTransport(MockScript script) : script_(std::move(script)) {}

std::int64_t MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

TransportResult MockTransport::post(const EndpointConfig& /*config*/, const ChatRequest& request) {
  if (script_.latency.count() > 0) std::this_thread::sleep_for(script_.latency);
  const std::string fingerprint = request_fingerprint(request);

  std::optional<MockOutcome> outcome;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    if (auto it = script_.by_fingerprint.find(fingerprint); it != script_.by_fingerprint.end() &&
                                                            !it->second.empty()) {
      std::size_t& used = consumed_[fingerprint];
      outcome = it->second[std::min(used, it->second.size() - 1)];
      ++used;
    }
  }
  if (!outcome && script_.responder) {
    if (auto text = script_.responder(request)) outcome = MockOutcome::reply(std::move(*text));
  }
  if (!outcome && !script_.rules.empty()) {
    std::string_view last_user;
    for (const auto& message : request.messages) {
      if (message.role == Role::kUser) last_user = message.content;
    }
    for (const auto& rule : script_.rules) {
      if (last_user.find(rule.contains) != std::string_view::npos) {
        outcome = MockOutcome::reply(rule.response);
        break;
      }
    }
  }
  if (!outcome && script_.default_response) outcome = MockOutcome::reply(*script_.default_response);
  if (!outcome) {
    return TransportFailure{FailureClass::kUnmatched, 0,
                            "no scripted response for request fingerprint " + fingerprint, {}, {}};
  }
  if (!outcome->content) {
    return TransportFailure{outcome->failure, outcome->status,
                            "scripted failure (status " + std::to_string(outcome->status) + ")", {}, {}};
  }

  ChatResponse response;
  response.content = *outcome->content;
  response.finish_reason = "stop";
  for (const auto& message : request.messages) response.prompt_tokens += word_count(message.content);
  response.completion_tokens = word_count(response.content);
  return response;
}

std::shared_ptr<MockTransport> make_mock(MockScript script) {
  if (script.by_fingerprint.empty() && script.rules.empty() && !script.responder &&
      !script.default_response) {
    throw UsageError("mock script is empty and has no default response");
  }
  return std::make_shared<MockTransport>(std::move(script));
}

std::shared_ptr<Endpoint> make_mock_endpoint(EndpointConfig config, MockScript script, RetryPolicy retry) {
  if (config.base_url.empty()) config.base_url = "mock://" + config.name;
  return std::make_shared<Endpoint>(std::move(config), make_mock(std::move(script)), std::move(retry));
}

// ---------------------------------------------------------------------------
// Wire format

json to_wire_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& message : request.messages) {
    messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  json body = {{"model", request.model_id}, {"messages", std::move(messages)}};
  if (request.temperature) body["temperature"] = *request.temperature;
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  return body;
}

TransportResult parse_wire_response(int status, const std::string& body,
                                    std::optional<std::chrono::milliseconds> retry_after) {
  if (status == 429) return TransportFailure{FailureClass::kRateLimited, status, "rate limited", body, retry_after};
  if (status >= 500 || status == 408) {
    return TransportFailure{FailureClass::kTransient, status, "server error", body, retry_after};
  }
  if (status >= 400) return TransportFailure{FailureClass::kClientError, status, "request rejected", body, {}};
  if (status < 200 || status >= 300) {
    return TransportFailure{FailureClass::kMalformed, status, "unexpected status", body, {}};
  }
  auto malformed = [&](const std::string& why) {
    return TransportFailure{FailureClass::kMalformed, status, "malformed response: " + why, body, {}};
  };
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return malformed("body is not a JSON object");
  const auto choices = parsed.find("choices");
  if (choices == parsed.end() || !choices->is_array() || choices->empty()) {
    return malformed("missing choices[0]");
  }
  const json& choice = (*choices)[0];
  if (!choice.contains("message") || !choice["message"].is_object()) {
    return malformed("missing choices[0].message");
  }
  const json& content = choice["message"].value("content", json());
  if (!content.is_string() && !content.is_null()) return malformed("message.content is not a string");

  ChatResponse response;
  response.content = content.is_string() ? content.get<std::string>() : std::string();
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
    response.finish_reason = choice["finish_reason"].get<std::string>();
  }
  if (auto usage = parsed.find("usage"); usage != parsed.end() && usage->is_object()) {
    response.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
    response.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
  }
  return response;
}

// ---------------------------------------------------------------------------
// Registry

void EndpointRegistry::add(std::shared_ptr<Endpoint> endpoint) {
  const std::string name = endpoint->config().name;
  if (!endpoints_.emplace(name, std::move(endpoint)).second) {
    throw UsageError("duplicate endpoint name '" + name + "'");
  }
}

std::shared_ptr<Endpoint> EndpointRegistry::get(std::string_view name) const {
  auto it = endpoints_.find(name);
  if (it == endpoints_.end()) throw UsageError("unknown endpoint '" + std::string(name) + "'");
  return it->second;
}

bool EndpointRegistry::contains(std::string_view name) const {
  return endpoints_.find(name) != endpoints_.end();
}

std::vector<std::string> EndpointRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : endpoints_) out.push_back(name);
  return out;
}

}  // namespace equacode
