#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <unistd.h>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/parallel.hpp"
#include "corpusforge/endpoint_config.hpp"
#include "corpusforge/llm_client.hpp"
#include "fixtures.hpp"

namespace cf = corpusforge;
namespace llm = corpusforge::llm;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cf_llm_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct CountingTransport {
  std::atomic<int> calls{0};
  std::function<llm::HttpResponse(int call, const std::string& path, const std::string& body)> respond;

  std::shared_ptr<llm::CallbackTransport> transport() {
    return std::make_shared<llm::CallbackTransport>([this](const std::string& path, const std::string& body) {
      return respond(calls++, path, body);
    });
  }
};

}  // namespace

TEST(MockEndpoint, EchoRepliesWithLastUserMessage) {
  auto c = fixtures::mock_client("mock://echo");
  std::vector<llm::Message> msgs{{llm::Role::system, "sys"}, {llm::Role::user, "first"},
                                 {llm::Role::assistant, "x"}, {llm::Role::user, "糖尿病?"}};
  EXPECT_EQ(c->chat(msgs).reply, "糖尿病?");
}

TEST(MockEndpoint, ConstantReplyIsPercentDecoded) {
  auto c = fixtures::mock_client("mock://constant?reply=Score%3A%2010");
  EXPECT_EQ(c->chat_user("anything").reply, "Score: 10");
}

TEST(MockEndpoint, EmbeddingsHaveRequestedDimension) {
  auto c = fixtures::mock_client("mock://echo?dim=16");
  std::vector<std::string> texts{"a", "b"};
  auto v = c->embed(texts);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].size(), 16u);
}

TEST(LlmClient, LastMessageMustBeUser) {
  auto c = fixtures::mock_client("mock://echo");
  std::vector<llm::Message> msgs{{llm::Role::user, "a"}, {llm::Role::assistant, "b"}};
  EXPECT_THROW(c->chat(msgs), cf::ValidationError);
}

TEST(LlmClient, TemperatureZeroIsCached) {
  auto cache = std::make_shared<llm::ResponseCache>();
  auto c = fixtures::mock_client("mock://echo", 4, cache);
  auto first = c->chat_user("hello");
  auto second = c->chat_user("hello");
  EXPECT_FALSE(first.cached);
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(second.reply, "hello");
  EXPECT_EQ(c->stats().network_calls, 1u);
  EXPECT_EQ(c->stats().cache_hits, 1u);
}

TEST(LlmClient, SaltAndBypassAndTemperatureSkipCache) {
  auto cache = std::make_shared<llm::ResponseCache>();
  auto c = fixtures::mock_client("mock://echo", 4, cache);
  c->chat_user("p");
  c->chat_user("p", {.sampling = std::nullopt, .bypass_cache = false, .cache_salt = "trial:1"});
  EXPECT_EQ(c->stats().network_calls, 2u);
  c->chat_user("p", {.sampling = std::nullopt, .bypass_cache = true, .cache_salt = {}});
  EXPECT_EQ(c->stats().network_calls, 3u);
  c->chat_user("p", {.sampling = llm::SamplingParams{0.7, 100}, .bypass_cache = false, .cache_salt = {}});
  c->chat_user("p", {.sampling = llm::SamplingParams{0.7, 100}, .bypass_cache = false, .cache_salt = {}});
  EXPECT_EQ(c->stats().network_calls, 5u);
}

TEST(LlmClient, FileCacheSurvivesProcessRestart) {
  const auto dir = temp_dir("cache");
  {
    auto c = fixtures::mock_client("mock://echo", 4, std::make_shared<llm::ResponseCache>(dir / "chat.jsonl"));
    c->chat_user("persist me");
  }
  auto cache = std::make_shared<llm::ResponseCache>(dir / "chat.jsonl");
  EXPECT_EQ(cache->size(), 1u);
  auto c = fixtures::mock_client("mock://echo", 4, cache);
  EXPECT_TRUE(c->chat_user("persist me").cached);
  EXPECT_EQ(c->stats().network_calls, 0u);
}

TEST(LlmClient, EmptyRepliesAreNotCached) {
  auto cache = std::make_shared<llm::ResponseCache>();
  auto c = fixtures::scripted_client([](const std::string&) { return std::string{}; }, "empty", 1, cache);
  c->chat_user("x");
  c->chat_user("x");
  EXPECT_EQ(c->stats().network_calls, 2u);
  EXPECT_EQ(cache->size(), 0u);
}

TEST(LlmClient, RetriesTransientFailuresWithBackoff) {
  CountingTransport t;
  t.respond = [](int call, const std::string&, const std::string&) {
    if (call < 2) return llm::HttpResponse{503, "busy", {}};
    return fixtures::chat_response("ok");
  };
  auto e = fixtures::endpoint("retry");
  e.retry = {5, std::chrono::milliseconds(100), std::chrono::milliseconds(1000)};
  llm::LlmClient c(e, t.transport());
  std::vector<std::chrono::milliseconds> sleeps;
  c.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  auto ex = c.chat_user("q");
  EXPECT_EQ(ex.reply, "ok");
  EXPECT_EQ(ex.retries, 2);
  ASSERT_EQ(sleeps.size(), 2u);
  // Jittered exponential: attempt a waits within [base*2^a/2, base*2^a].
  EXPECT_GE(sleeps[0].count(), 50);
  EXPECT_LE(sleeps[0].count(), 100);
  EXPECT_GE(sleeps[1].count(), 100);
  EXPECT_LE(sleeps[1].count(), 200);
}

TEST(LlmClient, HonorsRetryAfter) {
  CountingTransport t;
  t.respond = [](int call, const std::string&, const std::string&) {
    if (call == 0) return llm::HttpResponse{429, "slow down", {{"Retry-After", "2"}}};
    return fixtures::chat_response("ok");
  };
  auto e = fixtures::endpoint("ra");
  e.retry = {3, std::chrono::milliseconds(10), std::chrono::milliseconds(60'000)};
  llm::LlmClient c(e, t.transport());
  std::vector<std::chrono::milliseconds> sleeps;
  c.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  c.chat_user("q");
  ASSERT_EQ(sleeps.size(), 1u);
  EXPECT_EQ(sleeps[0].count(), 2000);
}

TEST(LlmClient, ClientErrorsAreNotRetried) {
  CountingTransport t;
  t.respond = [](int, const std::string&, const std::string&) { return llm::HttpResponse{400, "bad", {}}; };
  llm::LlmClient c(fixtures::endpoint("bad"), t.transport());
  c.set_sleeper([](std::chrono::milliseconds) {});
  try {
    c.chat_user("q");
    FAIL();
  } catch (const llm::EndpointError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(t.calls.load(), 1);
}

TEST(LlmClient, GivesUpAfterMaxRetries) {
  CountingTransport t;
  t.respond = [](int, const std::string&, const std::string&) -> llm::HttpResponse {
    throw llm::TransportError("connection refused");
  };
  auto e = fixtures::endpoint("down");
  e.retry.max_retries = 3;
  llm::LlmClient c(e, t.transport());
  c.set_sleeper([](std::chrono::milliseconds) {});
  EXPECT_THROW(c.chat_user("q"), llm::EndpointError);
  EXPECT_EQ(t.calls.load(), 4);
}

TEST(LlmClient, InFlightCapIsEnforced) {
  std::atomic<int> now{0}, peak{0};
  auto transport = std::make_shared<llm::CallbackTransport>([&](const std::string&, const std::string&) {
    const int n = ++now;
    int p = peak.load();
    while (n > p && !peak.compare_exchange_weak(p, n)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
    --now;
    return fixtures::chat_response("ok");
  });
  auto e = fixtures::endpoint("cap", 2);
  llm::LlmClient c(e, transport);
  cf::parallel_for(12, 6, [&](std::size_t i) { c.chat_user("q" + std::to_string(i)); });
  EXPECT_LE(peak.load(), 2);
  EXPECT_LE(c.stats().peak_in_flight, 2u);
  EXPECT_EQ(c.stats().network_calls, 12u);
}

TEST(LlmClient, EmbeddingsBatchedDedupedAndCached) {
  CountingTransport t;
  std::vector<std::size_t> batch_sizes;
  t.respond = [&](int, const std::string& path, const std::string& body) {
    EXPECT_NE(path.find("/v1/embeddings"), std::string::npos);
    const auto req = json::parse(body);
    batch_sizes.push_back(req.at("input").size());
    json data = json::array();
    std::size_t i = 0;
    for (const auto& text : req.at("input")) {
      data.push_back({{"index", i++}, {"embedding", llm::hash_embedding(text.get<std::string>(), 8)}});
    }
    return llm::HttpResponse{200, json{{"data", data}}.dump(), {}};
  };
  auto e = fixtures::endpoint("emb");
  e.embed_batch_limit = 3;
  llm::LlmClient c(e, t.transport());
  std::vector<std::string> texts{"a", "b", "c", "a", "d", "e", "f", "g", "b"};
  auto v = c.embed(texts);
  EXPECT_EQ(batch_sizes, (std::vector<std::size_t>{3, 3, 1}));
  EXPECT_EQ(v[0], v[3]);
  c.embed(texts);
  EXPECT_EQ(t.calls.load(), 3);
}

TEST(ApiPrefix, DefaultsToV1) {
  EXPECT_EQ(llm::api_prefix("https://api.example.com"), "/v1");
  EXPECT_EQ(llm::api_prefix("https://api.example.com/"), "/v1");
  EXPECT_EQ(llm::api_prefix("http://localhost:8000/openai/v1"), "/openai/v1");
  EXPECT_EQ(llm::api_prefix("mock://echo"), "/v1");
}

TEST(EndpointConfig, ParsesNamedEndpoints) {
  auto cfg = llm::config_from_json(json::parse(R"({
    "cache_dir": "/tmp/x",
    "endpoints": {"seed": {"base_url": "http://localhost:9/v1", "model": "qwen", "temperature": 0,
                           "max_in_flight": 8, "embed_batch_limit": 16, "retry_base_ms": 5}}
  })"));
  ASSERT_TRUE(cfg.endpoints.count("seed"));
  const auto& e = cfg.endpoints.at("seed");
  EXPECT_EQ(e.model, "qwen");
  EXPECT_EQ(e.max_in_flight, 8);
  EXPECT_EQ(e.embed_batch_limit, 16u);
  EXPECT_EQ(e.retry.base_delay.count(), 5);
  EXPECT_EQ(llm::resolve_endpoint(cfg, "seed").base_url, "http://localhost:9/v1");
  EXPECT_EQ(llm::resolve_endpoint(cfg, "mock://echo").base_url, "mock://echo");
  EXPECT_THROW(llm::resolve_endpoint(cfg, "missing"), cf::ValidationError);
}

TEST(EndpointConfig, FactorySharesCachesAcrossClients) {
  const auto dir = temp_dir("factory");
  llm::ToolkitConfig cfg;
  cfg.cache_dir = dir;
  {
    llm::ClientFactory f(cfg);
    f.client("mock://echo")->chat_user("shared");
  }
  llm::ClientFactory f(cfg);
  EXPECT_TRUE(f.client("mock://echo")->chat_user("shared").cached);
  EXPECT_TRUE(std::filesystem::exists(dir / "chat.jsonl"));
}

TEST(EndpointConfig, InvalidEndpointRejected) {
  auto e = fixtures::endpoint("x");
  e.max_in_flight = 0;
  EXPECT_THROW(e.validate(), cf::ValidationError);
}
