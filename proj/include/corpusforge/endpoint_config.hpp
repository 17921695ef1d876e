#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "corpusforge/llm_client.hpp"
#include "json.hpp"

namespace corpusforge::llm {

// Structured config file:
//   {"cache_dir": "...", "endpoints": {"seed": {"base_url": ..., "model": ...}}}
struct ToolkitConfig {
  std::map<std::string, ModelEndpoint> endpoints;
  std::filesystem::path cache_dir;  // empty: caches live in memory only
};

ModelEndpoint endpoint_from_json(const std::string& name, const nlohmann::json& j);
ToolkitConfig config_from_json(const nlohmann::json& j);
ToolkitConfig load_config(const std::filesystem::path& path);

// Named endpoint from the config, or an ad hoc endpoint when `name_or_url`
// contains "://" (model id defaults to the URL).
ModelEndpoint resolve_endpoint(const ToolkitConfig& config, const std::string& name_or_url);

// Hands out clients that share one chat cache and one embedding cache under
// cache_dir, so every pipeline stage in a process reuses the same files.
class ClientFactory {
 public:
  explicit ClientFactory(ToolkitConfig config);

  std::shared_ptr<LlmClient> client(const std::string& name_or_url);
  const ToolkitConfig& config() const { return config_; }

 private:
  ToolkitConfig config_;
  std::shared_ptr<ResponseCache> chat_cache_;
  std::shared_ptr<EmbeddingCache> embed_cache_;
  std::map<std::string, std::shared_ptr<LlmClient>> clients_;
};

}  // namespace corpusforge::llm
