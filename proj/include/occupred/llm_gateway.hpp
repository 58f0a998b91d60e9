#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "occupred/errors.hpp"
#include "occupred/json_io.hpp"

namespace occupred {

enum class Role { system, user, assistant };

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string endpoint_id;
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.8;
  int max_tokens = 1024;
  std::optional<std::int64_t> sampling_seed;
  /// Distinguishes independent samples of the same prompt; part of the cache key.
  int attempt_index = 0;
  bool logprobs = false;
  /// Audit/routing metadata (stage, user id, variant). Never sent over the
  /// wire and not part of the cache key.
  std::map<std::string, std::string> labels;

  /// Throws InvalidArgument unless there is a user message and 0 <= temperature <= 2.
  void validate() const;
};

enum class FinishReason { stop, length, content_filter, other };

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  Usage usage;

  bool operator==(const ChatResponse&) const = default;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{8000};

  /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
  std::chrono::milliseconds delay(int retry) const;
};

struct EndpointConfig {
  std::string id;
  std::string base_url;
  std::string model;
  /// Name of the environment variable holding the API key; the key itself is
  /// never stored.
  std::string api_key_env;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, bool retryable = true)
      : Error("TransportError", what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class RateLimited : public Error {
 public:
  explicit RateLimited(const std::string& what) : Error("RateLimited", what) {}
};

class MalformedResponse : public Error {
 public:
  explicit MalformedResponse(const std::string& what) : Error("MalformedResponse", what) {}
};

class PlaybookMiss : public Error {
 public:
  explicit PlaybookMiss(const std::string& what) : Error("PlaybookMiss", what) {}
};

// ---------------------------------------------------------------------------
// Backends

/// One raw call, no caching or retries.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// OpenAI-style chat-completions over HTTP(S).
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(std::vector<EndpointConfig> endpoints);
  ChatResponse send(const ChatRequest& request) override;

  /// Request body as sent on the wire (exposed for tests).
  static Json request_body(const ChatRequest& request);
  /// Parses choices[0].message.content, finish_reason, logprobs and usage.
  /// Throws MalformedResponse.
  static ChatResponse parse_response_body(const std::string& body);

 private:
  std::map<std::string, EndpointConfig> endpoints_;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct PlaybookMatch {
  std::optional<std::string> digest;
  std::optional<std::string> endpoint_id;
  std::optional<int> attempt_index;
  std::map<std::string, std::string> labels;
  /// Every entry must occur in the concatenated message contents.
  std::vector<std::string> contains;

  bool matches(const ChatRequest& request, const std::string& digest) const;
};

struct ScriptedStep {
  enum class Kind { respond, transport_error, rate_limited, malformed };
  Kind kind = Kind::respond;
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::chrono::milliseconds delay{0};
};

struct PlaybookRule {
  std::string name;
  PlaybookMatch match;
  std::vector<ScriptedStep> steps;
  /// After the last step: keep replaying it, or raise PlaybookMiss.
  bool repeat_last = true;
};

struct Playbook {
  std::vector<PlaybookRule> rules;

  static Playbook from_json(const Json& j);
  static Playbook load(const std::filesystem::path& path);
  Json to_json() const;
};

struct TranscriptEntry {
  std::size_t sequence = 0;
  std::string digest;
  std::string endpoint_id;
  std::string model;
  int attempt_index = 0;
  std::map<std::string, std::string> labels;
  std::vector<ChatMessage> messages;
  std::string rule;     // empty on miss
  std::string outcome;  // "ok" or error kind
};

/// Deterministic backend driven by a playbook. The first rule (in playbook
/// order) whose match accepts the request serves it; each rule consumes its
/// steps in order.
class ScriptedMock : public ChatBackend {
 public:
  explicit ScriptedMock(Playbook playbook);
  ChatResponse send(const ChatRequest& request) override;

  std::vector<TranscriptEntry> transcript() const;
  std::size_t calls() const;
  std::size_t max_concurrent() const noexcept { return max_concurrent_.load(); }

 private:
  Playbook playbook_;
  std::vector<std::size_t> cursors_;
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> transcript_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_concurrent_{0};
};

// ---------------------------------------------------------------------------
// Cache and gateway

/// Canonical key material: endpoint, model, messages, temperature,
/// max_tokens, sampling_seed, attempt_index (and logprobs when requested).
Json cache_key_material(const ChatRequest& request);
std::string request_digest(const ChatRequest& request);

/// One JSON file per request digest under `dir/<first two hex>/`.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<ChatResponse> get(const std::string& digest) const;
  void put(const std::string& digest, const Json& key_material, const ChatResponse& response) const;
  std::filesystem::path path_for(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
};

struct CallError {
  std::string kind;
  std::string message;
};

struct CallResult {
  std::optional<ChatResponse> response;
  std::optional<CallError> error;

  bool ok() const noexcept { return response.has_value(); }
};

struct GatewayOptions {
  RetryPolicy retry;
  std::map<std::string, RetryPolicy> endpoint_retry;
  std::optional<std::filesystem::path> cache_dir;
  /// Backoff sleeper; tests inject a recorder.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

struct GatewayCounters {
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;
};

/// Cached, retrying front for a backend. Shareable across threads.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

  /// Throws TransportError / RateLimited after the retry budget,
  /// MalformedResponse immediately.
  ChatResponse complete(const ChatRequest& request);

  /// Results are positional; at most `max_in_flight` requests are outstanding
  /// and per-item failures never abort the batch. Requests with equal digests
  /// are sent once and share the result of the earliest position.
  std::vector<CallResult> complete_batch(const std::vector<ChatRequest>& requests, std::size_t max_in_flight);

  GatewayCounters counters() const;

 private:
  const RetryPolicy& retry_for(const std::string& endpoint_id) const;

  std::shared_ptr<ChatBackend> backend_;
  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  std::atomic<std::size_t> hits_{0}, misses_{0}, calls_{0}, retries_{0};
};

/// Per-stage call parameters; stages stamp labels and attempt indices.
struct CallSettings {
  std::string endpoint_id;
  std::string model;
  double temperature = 0.8;
  int max_tokens = 1024;
  std::optional<std::int64_t> sampling_seed;
  std::size_t max_in_flight = 4;

  /// Single user-turn request.
  ChatRequest request(std::string prompt, int attempt_index = 0,
                      std::map<std::string, std::string> labels = {}) const;
};

// JSON helpers shared by the cache, mock and artifacts.
std::string to_string(Role role);
Role role_from_string(const std::string& s);
std::string to_string(FinishReason reason);
FinishReason finish_reason_from_string(const std::string& s);
void to_json(Json& j, const ChatMessage& m);
void from_json(const Json& j, ChatMessage& m);
void to_json(Json& j, const ChatResponse& r);
void from_json(const Json& j, ChatResponse& r);

}  // namespace occupred
