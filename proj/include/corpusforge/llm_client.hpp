#pragma once

// Chat-completion and embedding access. Everything that calls a model goes
// through LlmClient: it owns retry with backoff, the in-flight request cap and
// the content-addressed caches.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpusforge/common/errors.hpp"
#include "json.hpp"

namespace corpusforge::llm {

struct SamplingParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
};

struct ModelEndpoint {
  std::string name;
  std::string base_url;
  std::string model;
  // Environment variable holding the bearer token. Unset variable means no
  // Authorization header.
  std::string api_key_env = "CORPUSFORGE_API_KEY";
  std::chrono::milliseconds timeout{120'000};
  int max_in_flight = 4;
  SamplingParams sampling;
  std::size_t embed_batch_limit = 64;
  RetryPolicy retry;

  void validate() const;
};

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct Message {
  Role role = Role::user;
  std::string content;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatExchange {
  std::vector<Message> messages;
  std::string reply;
  Usage usage;
  bool cached = false;
  int retries = 0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
};

// Connection failures and timeouts; always retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

class EndpointError : public Error {
 public:
  EndpointError(const std::string& what, int status, bool retryable)
      : Error(what), status_(status), retryable_(retryable) {}
  int status() const { return status_; }
  bool retryable() const { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // `path` is absolute on the server, e.g. "/v1/chat/completions".
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& headers) = 0;
};

using TransportHandler = std::function<HttpResponse(const std::string& path, const std::string& body)>;

class CallbackTransport final : public Transport {
 public:
  explicit CallbackTransport(TransportHandler handler) : handler_(std::move(handler)) {}
  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>&) override {
    return handler_(path, body);
  }

 private:
  TransportHandler handler_;
};

// Plain HTTP(S) via cpp-httplib. One connection per request.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout);
  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>& headers) override;

 private:
  std::string origin_;
  std::chrono::milliseconds timeout_;
};

// Deterministic in-process endpoints, selected by "mock://<kind>" URLs:
//   mock://echo            chat reply = last user message
//   mock://constant?reply= chat reply = the (percent-decoded) query value
// Both answer embeddings with hashed character n-gram vectors (dimension from
// the `dim` query parameter, default 64), so near-identical texts embed close.
std::shared_ptr<Transport> make_mock_transport(const std::string& url);

// Hashed n-gram embedding used by the mock endpoints.
std::vector<double> hash_embedding(std::string_view text, std::size_t dim);

// Picks HttpTransport or a mock transport from the URL scheme.
std::shared_ptr<Transport> make_transport(const ModelEndpoint& endpoint);

// Path prefix for OpenAI-style routes: "/v1" when the URL has no path,
// otherwise the URL path itself (so ".../v1" is not doubled).
std::string api_prefix(const std::string& base_url);

// Append-only JSONL store of (key, request, response). Lookups verify the
// stored request equals the new one, so a key hit always means an identical
// payload.
class ResponseCache {
 public:
  ResponseCache() = default;  // memory only
  explicit ResponseCache(std::filesystem::path file);

  std::optional<nlohmann::json> lookup(const std::string& key, const nlohmann::json& request) const;
  void store(const std::string& key, const nlohmann::json& request, const nlohmann::json& response);
  std::size_t size() const;

 private:
  struct Entry {
    nlohmann::json request;
    nlohmann::json response;
  };
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> file_;
  std::unordered_map<std::string, Entry> entries_;
};

// JSONL sidecar of embeddings keyed by (model id, sha256(text)).
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file);

  std::optional<std::vector<double>> lookup(const std::string& model, const std::string& text) const;
  void store(const std::string& model, const std::string& text, const std::vector<double>& vec);
  std::size_t size() const;

 private:
  static std::string key(const std::string& model, const std::string& text_hash);
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> file_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

struct ChatOptions {
  std::optional<SamplingParams> sampling;
  // Skip the cache lookup (the result is still stored).
  bool bypass_cache = false;
  // Mixed into the cache key only; lets repeated trials of one prompt cache
  // separately.
  std::string cache_salt;
};

struct ClientStats {
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
  std::size_t peak_in_flight = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class LlmClient {
 public:
  LlmClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
            std::shared_ptr<ResponseCache> chat_cache = nullptr,
            std::shared_ptr<EmbeddingCache> embed_cache = nullptr);

  const ModelEndpoint& endpoint() const { return endpoint_; }

  // Last message must be from the user. Temperature-0 requests are served
  // from and written to the chat cache when one is attached.
  ChatExchange chat(std::span<const Message> messages, const ChatOptions& options = {});
  ChatExchange chat_user(const std::string& prompt, const ChatOptions& options = {});

  // One vector per text in input order. Duplicate and previously seen texts
  // are answered from the embedding cache; misses go out in batches of at
  // most embed_batch_limit.
  std::vector<std::vector<double>> embed(std::span<const std::string> texts);

  ClientStats stats() const;
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  HttpResponse send_with_retry(const std::string& path, const std::string& body, int& retries);
  std::chrono::milliseconds backoff_delay(int attempt);

  ModelEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> chat_cache_;
  std::shared_ptr<EmbeddingCache> embed_cache_;
  std::string prefix_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::size_t> current_in_flight_{0};
  mutable std::mutex stats_mu_;
  ClientStats stats_;
  std::mutex jitter_mu_;
  std::uint64_t jitter_state_;
};

// Canonical request payload for a chat call; also the cache-key preimage.
nlohmann::json chat_payload(const std::string& model, std::span<const Message> messages,
                            const SamplingParams& sampling);

}  // namespace corpusforge::llm
