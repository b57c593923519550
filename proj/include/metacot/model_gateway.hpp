#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacot/error.hpp"

// Uniform client for chat-completions style text/vision model endpoints.
// Every network call in the toolkit goes through complete(); tests and
// offline runs bind profiles to a MockBackend instead.
namespace metacot::gateway {

/// Image referenced by path or URL plus a content digest; images are never
/// embedded in stored records.
struct ImageRef {
  std::string uri;
  std::string digest;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

/// Local paths that exist get their digest filled in ("sha256:<hex>").
ImageRef image_ref(std::string uri);
/// Accepts a path string or an object {"uri", "digest"}.
ImageRef image_ref_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ImageRef& img);

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
  std::vector<ImageRef> images;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;

  /// Canonical JSON used for hashing: roles, texts, image URIs and digests.
  nlohmann::json canonical_json() const;
  /// Lowercase hex SHA-256 of canonical_json().dump().
  std::string digest() const;
  /// Concatenated message texts, used by substring fixture rules.
  std::string flat_text() const;
};

struct ChatExchange {
  std::string content_digest;
  std::string response;
  double latency_ms = 0.0;
  int attempt_count = 0;
};

struct AttemptResult {
  enum class Status { Ok, Retryable, Fatal };
  Status status = Status::Fatal;
  std::string body;  // reply text on Ok, error description otherwise
  int http_status = 0;
  bool unknown_fixture = false;
};

class GatewayProfile;

class Backend {
 public:
  virtual ~Backend() = default;
  virtual AttemptResult attempt(const GatewayProfile& profile, const ChatRequest& request,
                                const std::string& digest) = 0;
  /// True when attempts leave the process (network I/O).
  virtual bool is_live() const = 0;
};

class GatewayProfile {
 public:
  std::string name = "default";
  std::string endpoint;        // e.g. https://host/v1/chat/completions
  std::string model;
  std::string credential_env;  // env var holding the API key; empty = no auth
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_in_flight = 4;
  std::size_t max_request_bytes = 20u << 20;
  double backoff_initial_ms = 500.0;
  double backoff_multiplier = 2.0;
  /// Null selects the HTTP backend.
  std::shared_ptr<Backend> backend;

  /// Throws PreconditionError on invalid settings.
  void check() const;
  bool is_mock() const;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};
class ExhaustedRetriesError : public GatewayError {
 public:
  ExhaustedRetriesError(const std::string& what, int attempts)
      : GatewayError(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};
class AuthMissingError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class PayloadTooLargeError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class UnknownFixtureError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class RequestRejectedError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Sends the request, retrying transport failures and 5xx/429 responses with
/// exponential backoff up to profile.max_retries times. At most
/// profile.max_in_flight calls per profile name run concurrently.
ChatExchange complete(const GatewayProfile& profile, const ChatRequest& request);

/// Number of attempts made by live backends since process start.
std::size_t live_call_count();

/// Deterministic fixture-driven backend. Lookup order: exact request digest,
/// then substring rules in insertion order, then the scripted responder,
/// then the unknown-request policy.
class MockBackend : public Backend {
 public:
  enum class UnknownMode { Error, Canned };

  MockBackend() = default;
  explicit MockBackend(std::map<std::string, std::string> fixtures,
                       UnknownMode mode = UnknownMode::Error, std::string canned = {});

  void add_fixture(const std::string& digest, std::string reply);
  void add_contains_rule(std::string needle, std::string reply);
  void set_unknown_error();
  void set_unknown_canned(std::string reply);
  /// Test hook: computes replies for requests no fixture matches.
  void set_responder(std::function<std::optional<std::string>(const ChatRequest&)> responder);
  /// The next `n` attempts fail with a retryable transport error.
  void fail_next(int n);

  /// Loads every *.jsonl file in `dir` (sorted by name). Lines are objects
  /// with "reply" and one of "digest" or "contains"; a line with only
  /// "default" sets a canned reply for unknown requests.
  static std::shared_ptr<MockBackend> load_dir(const std::filesystem::path& dir);

  AttemptResult attempt(const GatewayProfile& profile, const ChatRequest& request,
                        const std::string& digest) override;
  bool is_live() const override { return false; }

  std::size_t call_count() const { return calls_.load(); }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> fixtures_;
  std::vector<std::pair<std::string, std::string>> contains_;
  std::function<std::optional<std::string>(const ChatRequest&)> responder_;
  UnknownMode mode_ = UnknownMode::Error;
  std::string canned_;
  int pending_failures_ = 0;
  std::atomic<std::size_t> calls_{0};
};

/// Profile bound to a fresh MockBackend over `fixtures`, with zero backoff.
GatewayProfile mock_backend(std::map<std::string, std::string> fixtures,
                            MockBackend::UnknownMode mode = MockBackend::UnknownMode::Error,
                            std::string canned = {});
GatewayProfile mock_profile(std::shared_ptr<MockBackend> backend, std::string name = "mock");

/// Chat-completions HTTP(S) backend.
class HttpBackend : public Backend {
 public:
  AttemptResult attempt(const GatewayProfile& profile, const ChatRequest& request,
                        const std::string& digest) override;
  bool is_live() const override { return true; }

  /// Request body in the chat-completions wire format. Local image paths are
  /// inlined as base64 data URLs.
  static nlohmann::json build_body(const GatewayProfile& profile, const ChatRequest& request);
  /// Extracts choices[0].message.content; nullopt when absent.
  static std::optional<std::string> extract_reply(const std::string& body);
};

}  // namespace metacot::gateway
