#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "equacode/client.hpp"
#include "equacode/error.hpp"

namespace equacode {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // no trailing slash
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("endpoint base_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  parsed.path = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!parsed.path.empty() && parsed.path.back() == '/') parsed.path.pop_back();
  return parsed;
}

std::optional<std::chrono::milliseconds> retry_after(const httplib::Response& res) {
  if (!res.has_header("Retry-After")) return std::nullopt;
  char* end = nullptr;
  const std::string value = res.get_header_value("Retry-After");
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0));
}

}  // namespace

TransportResult HttpTransport::post(const EndpointConfig& config, const ChatRequest& request) {
  const ParsedUrl url = split_url(config.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration<double>(config.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (!config.auth_env.empty()) {
    if (const char* key = std::getenv(config.auth_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const std::string body = to_wire_json(request).dump();
  auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
  if (!res) {
    return TransportFailure{FailureClass::kTransient, 0,
                            "transport error: " + httplib::to_string(res.error()), {}, {}};
  }
  return parse_wire_response(res->status, res->body, retry_after(*res));
}

}  // namespace equacode

#include "equacode/scoring.hpp"

namespace equacode {

LogprobScorer::Fetcher completions_logprob_fetcher(const EndpointConfig& config) {
  config.validate();
  return [config](std::string_view text) -> std::vector<double> {
    const ParsedUrl url = split_url(config.base_url);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config.timeout_s));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!config.auth_env.empty()) {
      const char* key = std::getenv(config.auth_env.c_str());
      if (key == nullptr) {
        throw EndpointError(EndpointFailure::kAuthMissing, "environment variable " + config.auth_env + " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const nlohmann::json body = {{"model", config.model_id}, {"prompt", std::string(text)}, {"echo", true},
                                 {"logprobs", 0}, {"max_tokens", 0}, {"temperature", 0.0}};
    auto res = client.Post(url.path + "/completions", headers, body.dump(), "application/json");
    if (!res) {
      throw EndpointError(EndpointFailure::kRetriesExhausted, "transport error: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw EndpointError(EndpointFailure::kClientError, "logprob request failed", res->status, res->body);
    }
    const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    std::vector<double> logprobs;
    try {
      for (const auto& value : parsed.at("choices").at(0).at("logprobs").at("token_logprobs")) {
        if (!value.is_null()) logprobs.push_back(value.get<double>());
      }
    } catch (const nlohmann::json::exception&) {
      throw EndpointError(EndpointFailure::kMalformedResponse, "no token_logprobs in response", res->status,
                          res->body);
    }
    return logprobs;
  };
}

}  // namespace equacode
