#include "corpusforge/endpoint_config.hpp"

#include <fstream>

namespace corpusforge::llm {

using nlohmann::json;

ModelEndpoint endpoint_from_json(const std::string& name, const json& j) {
  if (!j.is_object()) throw ValidationError("endpoint " + name + " must be an object");
  ModelEndpoint e;
  e.name = name;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.value("model", e.base_url);
    e.api_key_env = j.value("api_key_env", e.api_key_env);
    e.timeout = std::chrono::milliseconds(j.value("timeout_ms", e.timeout.count()));
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.sampling.temperature = j.value("temperature", e.sampling.temperature);
    e.sampling.max_tokens = j.value("max_tokens", e.sampling.max_tokens);
    e.embed_batch_limit = j.value("embed_batch_limit", e.embed_batch_limit);
    e.retry.max_retries = j.value("max_retries", e.retry.max_retries);
    e.retry.base_delay = std::chrono::milliseconds(j.value("retry_base_ms", e.retry.base_delay.count()));
    e.retry.max_delay = std::chrono::milliseconds(j.value("retry_max_ms", e.retry.max_delay.count()));
  } catch (const json::exception& ex) {
    throw ValidationError("endpoint " + name + ": " + ex.what());
  }
  e.validate();
  return e;
}

ToolkitConfig config_from_json(const json& j) {
  ToolkitConfig c;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (j.contains("cache_dir")) c.cache_dir = j["cache_dir"].get<std::string>();
  if (j.contains("endpoints")) {
    for (const auto& [name, spec] : j["endpoints"].items()) {
      c.endpoints.emplace(name, endpoint_from_json(name, spec));
    }
  }
  return c;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    ToolkitConfig c = config_from_json(json::parse(in));
    if (!c.cache_dir.empty() && c.cache_dir.is_relative()) {
      c.cache_dir = path.parent_path() / c.cache_dir;
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
}

ModelEndpoint resolve_endpoint(const ToolkitConfig& config, const std::string& name_or_url) {
  if (auto it = config.endpoints.find(name_or_url); it != config.endpoints.end()) return it->second;
  if (name_or_url.find("://") != std::string::npos) {
    ModelEndpoint e;
    e.name = name_or_url;
    e.base_url = name_or_url;
    e.model = name_or_url;
    e.validate();
    return e;
  }
  throw ValidationError("unknown endpoint '" + name_or_url + "' (not in config and not a URL)");
}

ClientFactory::ClientFactory(ToolkitConfig config) : config_(std::move(config)) {
  if (config_.cache_dir.empty()) {
    chat_cache_ = std::make_shared<ResponseCache>();
    embed_cache_ = std::make_shared<EmbeddingCache>();
  } else {
    std::filesystem::create_directories(config_.cache_dir);
    chat_cache_ = std::make_shared<ResponseCache>(config_.cache_dir / "chat.jsonl");
    embed_cache_ = std::make_shared<EmbeddingCache>(config_.cache_dir / "embeddings.jsonl");
  }
}

std::shared_ptr<LlmClient> ClientFactory::client(const std::string& name_or_url) {
  if (auto it = clients_.find(name_or_url); it != clients_.end()) return it->second;
  ModelEndpoint e = resolve_endpoint(config_, name_or_url);
  auto transport = make_transport(e);
  auto c = std::make_shared<LlmClient>(std::move(e), std::move(transport), chat_cache_, embed_cache_);
  clients_.emplace(name_or_url, c);
  return c;
}

}  // namespace corpusforge::llm
