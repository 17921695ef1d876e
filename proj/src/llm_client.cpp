#include "corpusforge/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "corpusforge/common/hash.hpp"
#include "corpusforge/common/log.hpp"
#include "httplib.h"

namespace corpusforge::llm {

using nlohmann::json;

void ModelEndpoint::validate() const {
  if (max_in_flight < 1 || max_in_flight > 1024) {
    throw ValidationError("endpoint " + name + ": max_in_flight must be in [1, 1024]");
  }
  if (timeout.count() <= 0) throw ValidationError("endpoint " + name + ": timeout must be > 0");
  if (base_url.empty()) throw ValidationError("endpoint " + name + ": base_url is required");
  if (embed_batch_limit == 0) throw ValidationError("endpoint " + name + ": embed_batch_limit must be > 0");
  if (retry.max_retries < 0) throw ValidationError("endpoint " + name + ": max_retries must be >= 0");
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

namespace {

struct ParsedUrl {
  std::string scheme;
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl p;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("URL lacks a scheme: " + url);
  p.scheme = url.substr(0, scheme_end);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    p.origin = url;
  } else {
    p.origin = url.substr(0, path_start);
    p.path = url.substr(path_start);
    const auto q = p.path.find('?');
    if (q != std::string::npos) p.path.erase(q);
    while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  }
  return p;
}

}  // namespace

std::string api_prefix(const std::string& base_url) {
  const ParsedUrl p = parse_url(base_url);
  if (p.scheme == "mock") return "/v1";
  return p.path.empty() ? "/v1" : p.path;
}

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : origin_(parse_url(base_url).origin), timeout_(timeout) {}

HttpResponse HttpTransport::post(const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) {
    throw TransportError("request to " + origin_ + path + " failed: " + httplib::to_string(res.error()));
  }
  HttpResponse out;
  out.status = res->status;
  out.body = res->body;
  for (const auto& [k, v] : res->headers) out.headers[k] = v;
  return out;
}

std::shared_ptr<Transport> make_transport(const ModelEndpoint& endpoint) {
  if (endpoint.base_url.rfind("mock://", 0) == 0) return make_mock_transport(endpoint.base_url);
  return std::make_shared<HttpTransport>(endpoint.base_url, endpoint.timeout);
}

// ---------------------------------------------------------------------------
// Caches

ResponseCache::ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      entries_[j.at("key").get<std::string>()] = {j.at("request"), j.at("response")};
    } catch (const json::exception&) {
      // A torn final line from an interrupted run is expected; skip it.
      log::warn("skipping unreadable cache line " + std::to_string(line_no) + " in " + file_->string());
    }
  }
}

std::optional<json> ResponseCache::lookup(const std::string& key, const json& request) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end() || it->second.request != request) return std::nullopt;
  return it->second.response;
}

void ResponseCache::store(const std::string& key, const json& request, const json& response) {
  std::lock_guard lock(mu_);
  entries_[key] = {request, response};
  if (file_) {
    std::ofstream out(*file_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to cache " + file_->string());
    out << json{{"key", key}, {"request", request}, {"response", response}}.dump() << '\n';
  }
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      entries_[key(j.at("model").get<std::string>(), j.at("text_sha256").get<std::string>())] =
          j.at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      log::warn("skipping unreadable embedding cache line in " + file_->string());
    }
  }
}

std::string EmbeddingCache::key(const std::string& model, const std::string& text_hash) {
  return model + '\x1f' + text_hash;
}

std::optional<std::vector<double>> EmbeddingCache::lookup(const std::string& model,
                                                          const std::string& text) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key(model, sha256_hex(text)));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::store(const std::string& model, const std::string& text,
                           const std::vector<double>& vec) {
  const std::string h = sha256_hex(text);
  std::lock_guard lock(mu_);
  entries_[key(model, h)] = vec;
  if (file_) {
    std::ofstream out(*file_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to embedding cache " + file_->string());
    out << json{{"model", model}, {"text_sha256", h}, {"embedding", vec}}.dump() << '\n';
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Client

json chat_payload(const std::string& model, std::span<const Message> messages,
                  const SamplingParams& sampling) {
  json msgs = json::array();
  for (const Message& m : messages) {
    msgs.push_back(json{{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  return json{{"model", model},
              {"messages", std::move(msgs)},
              {"temperature", sampling.temperature},
              {"max_tokens", sampling.max_tokens}};
}

LlmClient::LlmClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
                     std::shared_ptr<ResponseCache> chat_cache,
                     std::shared_ptr<EmbeddingCache> embed_cache)
    : endpoint_((endpoint.validate(), std::move(endpoint))),
      transport_(std::move(transport)),
      chat_cache_(std::move(chat_cache)),
      embed_cache_(embed_cache ? std::move(embed_cache) : std::make_shared<EmbeddingCache>()),
      prefix_(api_prefix(endpoint_.base_url)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      in_flight_(endpoint_.max_in_flight),
      jitter_state_(std::random_device{}()) {
  if (!transport_) throw ValidationError("LlmClient needs a transport");
}

ClientStats LlmClient::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

std::chrono::milliseconds LlmClient::backoff_delay(int attempt) {
  const auto& r = endpoint_.retry;
  const double base = static_cast<double>(r.base_delay.count()) * std::pow(2.0, attempt);
  const double capped = std::min(base, static_cast<double>(r.max_delay.count()));
  double u = 0.0;
  {
    // splitmix64 step; jitter only spreads retry timing and never affects output.
    std::lock_guard lock(jitter_mu_);
    std::uint64_t z = (jitter_state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    u = static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
  }
  return std::chrono::milliseconds(static_cast<long>(capped * (0.5 + 0.5 * u)));
}

HttpResponse LlmClient::send_with_retry(const std::string& path, const std::string& body, int& retries) {
  std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
  if (!endpoint_.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key) {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  for (int attempt = 0;; ++attempt) {
    std::string failure;
    std::optional<std::chrono::milliseconds> retry_after;
    int status = 0;
    {
      in_flight_.acquire();
      const std::size_t now = ++current_in_flight_;
      {
        std::lock_guard lock(stats_mu_);
        stats_.network_calls += 1;
        stats_.peak_in_flight = std::max(stats_.peak_in_flight, now);
      }
      struct Release {
        LlmClient* self;
        ~Release() {
          --self->current_in_flight_;
          self->in_flight_.release();
        }
      } release{this};
      try {
        HttpResponse res = transport_->post(path, body, headers);
        status = res.status;
        if (status >= 200 && status < 300) return res;
        const bool retryable = status == 429 || status >= 500;
        if (!retryable) {
          throw EndpointError("endpoint " + endpoint_.name + " returned HTTP " +
                                  std::to_string(status) + ": " + res.body.substr(0, 300),
                              status, false);
        }
        failure = "HTTP " + std::to_string(status);
        if (auto it = res.headers.find("Retry-After"); it != res.headers.end()) {
          char* end = nullptr;
          const double secs = std::strtod(it->second.c_str(), &end);
          if (end != it->second.c_str() && secs >= 0) {
            retry_after = std::chrono::milliseconds(static_cast<long>(secs * 1000.0));
          }
        }
      } catch (const TransportError& e) {
        failure = e.what();
      }
    }
    if (attempt >= endpoint_.retry.max_retries) {
      throw EndpointError("endpoint " + endpoint_.name + ": retries exhausted after " +
                              std::to_string(attempt) + " retries (" + failure + ")",
                          status, true);
    }
    auto delay = backoff_delay(attempt);
    if (retry_after) delay = std::min(std::max(delay, *retry_after), endpoint_.retry.max_delay);
    ++retries;
    {
      std::lock_guard lock(stats_mu_);
      stats_.retries += 1;
    }
    log::info("endpoint " + endpoint_.name + ": " + failure + ", retry " + std::to_string(attempt + 1) +
              " in " + std::to_string(delay.count()) + " ms");
    sleeper_(delay);
  }
}

ChatExchange LlmClient::chat(std::span<const Message> messages, const ChatOptions& options) {
  if (messages.empty()) throw ValidationError("chat needs at least one message");
  if (messages.back().role != Role::user) throw ValidationError("last chat message must be from the user");

  const SamplingParams sampling = options.sampling.value_or(endpoint_.sampling);
  const json payload = chat_payload(endpoint_.model, messages, sampling);
  const bool cacheable = chat_cache_ && sampling.temperature == 0.0;
  const std::string key = cacheable ? sha256_hex(payload.dump() + '\x1f' + options.cache_salt) : "";

  ChatExchange ex;
  ex.messages.assign(messages.begin(), messages.end());
  if (cacheable && !options.bypass_cache) {
    if (auto hit = chat_cache_->lookup(key, payload)) {
      ex.reply = hit->at("reply").get<std::string>();
      ex.usage.prompt_tokens = hit->value("/usage/prompt_tokens"_json_pointer, 0L);
      ex.usage.completion_tokens = hit->value("/usage/completion_tokens"_json_pointer, 0L);
      ex.cached = true;
      std::lock_guard lock(stats_mu_);
      stats_.cache_hits += 1;
      return ex;
    }
  }

  const HttpResponse res = send_with_retry(prefix_ + "/chat/completions", payload.dump(), ex.retries);
  try {
    const json body = json::parse(res.body);
    const json& content = body.at("choices").at(0).at("message").at("content");
    ex.reply = content.is_null() ? std::string{} : content.get<std::string>();
    if (body.contains("usage") && body["usage"].is_object()) {
      ex.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0L);
      ex.usage.completion_tokens = body["usage"].value("completion_tokens", 0L);
    }
  } catch (const json::exception& e) {
    throw EndpointError("endpoint " + endpoint_.name + ": malformed chat response: " + e.what(),
                        res.status, false);
  }
  if (cacheable && !ex.reply.empty()) {
    chat_cache_->store(key, payload,
                       json{{"reply", ex.reply},
                            {"usage",
                             {{"prompt_tokens", ex.usage.prompt_tokens},
                              {"completion_tokens", ex.usage.completion_tokens}}}});
  }
  return ex;
}

ChatExchange LlmClient::chat_user(const std::string& prompt, const ChatOptions& options) {
  const Message m{Role::user, prompt};
  return chat(std::span<const Message>(&m, 1), options);
}

std::vector<std::vector<double>> LlmClient::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed needs at least one text");
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> misses;
  std::unordered_map<std::string, std::size_t> miss_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = embed_cache_->lookup(endpoint_.model, texts[i])) {
      out[i] = std::move(*hit);
      std::lock_guard lock(stats_mu_);
      stats_.cache_hits += 1;
    } else if (miss_index.emplace(texts[i], misses.size()).second) {
      misses.push_back(texts[i]);
    }
  }

  for (std::size_t start = 0; start < misses.size(); start += endpoint_.embed_batch_limit) {
    const std::size_t end = std::min(misses.size(), start + endpoint_.embed_batch_limit);
    const json payload{{"model", endpoint_.model},
                       {"input", std::vector<std::string>(misses.begin() + static_cast<long>(start),
                                                          misses.begin() + static_cast<long>(end))}};
    int retries = 0;
    const HttpResponse res = send_with_retry(prefix_ + "/embeddings", payload.dump(), retries);
    std::vector<std::vector<double>> batch(end - start);
    try {
      const json body = json::parse(res.body);
      const json& data = body.at("data");
      if (data.size() != batch.size()) throw EndpointError("embedding count mismatch", res.status, false);
      for (std::size_t k = 0; k < data.size(); ++k) {
        const std::size_t idx = data[k].value("index", k);
        if (idx >= batch.size()) throw EndpointError("embedding index out of range", res.status, false);
        batch[idx] = data[k].at("embedding").get<std::vector<double>>();
      }
    } catch (const json::exception& e) {
      throw EndpointError("endpoint " + endpoint_.name + ": malformed embedding response: " + e.what(),
                          res.status, false);
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      embed_cache_->store(endpoint_.model, misses[start + k], batch[k]);
    }
  }

  std::optional<std::size_t> dim;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (out[i].empty()) {
      auto hit = embed_cache_->lookup(endpoint_.model, texts[i]);
      if (!hit) throw EndpointError("embedding missing for input " + std::to_string(i), 0, false);
      out[i] = std::move(*hit);
    }
    if (!dim) dim = out[i].size();
    if (out[i].size() != *dim || *dim == 0) {
      throw EndpointError("endpoint " + endpoint_.name + ": inconsistent embedding dimensions", 0, false);
    }
  }
  return out;
}

}  // namespace corpusforge::llm
