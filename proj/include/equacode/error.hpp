#pragma once

#include <stdexcept>
#include <string>

namespace equacode {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,     ///< bad arguments or configuration
  kData,      ///< malformed corpus, template, scorer file, ...
  kEndpoint,  ///< a remote or mock endpoint failed
  kStore,     ///< transcript store I/O or consistency failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error(ErrorKind::kUsage, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error(ErrorKind::kData, message) {}
};

class StoreError : public Error {
 public:
  explicit StoreError(const std::string& message) : Error(ErrorKind::kStore, message) {}
};

enum class EndpointFailure {
  kAuthMissing,
  kClientError,       // non-retryable 4xx
  kRetriesExhausted,
  kMalformedResponse,  // body did not follow the chat-completions shape
  kUnmatchedRequest,   // mock had no scripted answer
};

class EndpointError : public Error {
 public:
  EndpointError(EndpointFailure failure, const std::string& message, int status = 0,
                std::string raw_body = {})
      : Error(ErrorKind::kEndpoint, message),
        failure_(failure),
        status_(status),
        raw_body_(std::move(raw_body)) {}

  EndpointFailure failure() const noexcept { return failure_; }
  int status() const noexcept { return status_; }
  /// Raw response body, kept so transcripts can record what the server sent.
  const std::string& raw_body() const noexcept { return raw_body_; }
  /// Attempts made before giving up (0 when the request was never sent).
  int attempts() const noexcept { return attempts_; }
  void set_attempts(int attempts) noexcept { attempts_ = attempts; }

 private:
  EndpointFailure failure_;
  int status_;
  std::string raw_body_;
  int attempts_ = 0;
};

}  // namespace equacode
