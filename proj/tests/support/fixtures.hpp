#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "corpusforge/common/rng.hpp"
#include "corpusforge/data_model.hpp"
#include "corpusforge/dedup.hpp"
#include "corpusforge/llm_client.hpp"
#include "json.hpp"

namespace fixtures {

namespace cf = corpusforge;

// Chat endpoint whose reply is computed from the last user message.
using Script = std::function<std::string(const std::string& prompt)>;

inline cf::llm::HttpResponse chat_response(const std::string& reply) {
  nlohmann::json body = {{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply}}}}}},
                         {"usage", {{"prompt_tokens", 1}, {"completion_tokens", 1}}}};
  return {200, body.dump(), {}};
}

inline std::shared_ptr<cf::llm::CallbackTransport> scripted_transport(Script script) {
  return std::make_shared<cf::llm::CallbackTransport>(
      [script = std::move(script)](const std::string& path, const std::string& body) {
        if (path.find("embeddings") != std::string::npos) {
          const auto req = nlohmann::json::parse(body);
          nlohmann::json data = nlohmann::json::array();
          std::size_t i = 0;
          for (const auto& text : req.at("input")) {
            data.push_back({{"index", i++}, {"embedding", cf::llm::hash_embedding(text.get<std::string>(), 32)}});
          }
          return cf::llm::HttpResponse{200, nlohmann::json{{"data", data}}.dump(), {}};
        }
        const auto req = nlohmann::json::parse(body);
        return chat_response(script(req.at("messages").back().at("content").get<std::string>()));
      });
}

inline cf::llm::ModelEndpoint endpoint(const std::string& name, int max_in_flight = 4) {
  cf::llm::ModelEndpoint e;
  e.name = name;
  e.base_url = "mock://" + name;
  e.model = name;
  e.max_in_flight = max_in_flight;
  e.retry.base_delay = std::chrono::milliseconds(0);
  return e;
}

inline std::shared_ptr<cf::llm::LlmClient> scripted_client(Script script, const std::string& name = "scripted",
                                                           int max_in_flight = 4,
                                                           std::shared_ptr<cf::llm::ResponseCache> cache = nullptr) {
  auto client = std::make_shared<cf::llm::LlmClient>(endpoint(name, max_in_flight), scripted_transport(std::move(script)),
                                                     std::move(cache));
  client->set_sleeper([](std::chrono::milliseconds) {});
  return client;
}

inline std::shared_ptr<cf::llm::LlmClient> mock_client(const std::string& url, int max_in_flight = 4,
                                                       std::shared_ptr<cf::llm::ResponseCache> cache = nullptr) {
  cf::llm::ModelEndpoint e;
  e.name = url;
  e.base_url = url;
  e.model = url;
  e.max_in_flight = max_in_flight;
  return std::make_shared<cf::llm::LlmClient>(e, cf::llm::make_mock_transport(url), std::move(cache));
}

inline std::vector<double> random_unit(cf::Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0;
  for (double& x : v) {
    // Box-Muller keeps the draw portable.
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    norm += x * x;
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

struct PlantedDedup {
  cf::data::Corpus corpus;
  std::vector<std::vector<double>> vectors;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (longer, shorter) row indices
  double min_pair_cosine = 1.0;
  double max_cross_cosine = -1.0;
};

// `total` unit vectors of which the last 2 * pairs form near-duplicate pairs.
// Pair members get different lengths; the longer one is listed first.
inline PlantedDedup planted_dedup(std::size_t total = 1000, std::size_t pair_count = 100, std::size_t dim = 64,
                                  std::uint64_t seed = 7) {
  PlantedDedup f;
  cf::Rng rng(seed);
  const std::size_t singles = total - 2 * pair_count;
  for (std::size_t i = 0; i < singles + pair_count; ++i) f.vectors.push_back(random_unit(rng, dim));
  for (std::size_t p = 0; p < pair_count; ++p) {
    const auto& base = f.vectors[singles + p];
    std::vector<double> noise = random_unit(rng, dim);
    std::vector<double> twin(dim);
    for (std::size_t j = 0; j < dim; ++j) twin[j] = base[j] + 0.15 * noise[j];
    f.vectors.push_back(twin);
  }
  std::vector<cf::data::Record> records;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t pad = 10 + i % 7;
    if (i >= singles && i < singles + pair_count) pad = 40;  // first member: longer
    if (i >= singles + pair_count) pad = 20;
    records.push_back(cf::data::Record::make(cf::data::Kind::dialogue, "question " + std::to_string(i),
                                             std::string(pad, 'x'), "fixture"));
  }
  for (std::size_t p = 0; p < pair_count; ++p) f.pairs.emplace_back(singles + p, singles + pair_count + p);
  f.corpus = cf::data::Corpus(records);

  std::vector<int> partner(total, -1);
  for (auto [a, b] : f.pairs) {
    partner[a] = static_cast<int>(b);
    partner[b] = static_cast<int>(a);
    f.min_pair_cosine = std::min(f.min_pair_cosine, cosine(f.vectors[a], f.vectors[b]));
  }
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = i + 1; j < total; ++j) {
      if (partner[i] == static_cast<int>(j)) continue;
      f.max_cross_cosine = std::max(f.max_cross_cosine, cosine(f.vectors[i], f.vectors[j]));
    }
  }
  return f;
}

inline cf::dedup::EmbeddingMatrix matrix_of(const PlantedDedup& f) {
  std::vector<std::string> ids;
  std::vector<std::size_t> lens;
  for (const auto& r : f.corpus) {
    ids.push_back(r.id);
    lens.push_back(r.char_len);
  }
  return cf::dedup::EmbeddingMatrix(ids, f.vectors, lens);
}

struct McqFixture {
  std::vector<cf::data::McqItem> items;
};

// `a1` Type A1 items followed by `a2` Type A2 items, five options each.
inline McqFixture mcq_fixture(std::size_t a1 = 235, std::size_t a2 = 77) {
  McqFixture f;
  const std::size_t total = a1 + a2;
  const std::vector<std::string> labels{"A", "B", "C", "D", "E"};
  for (std::size_t i = 0; i < total; ++i) {
    cf::data::McqItem item;
    item.id = "q" + std::to_string(i);
    item.stem = "第" + std::to_string(i) + "题：下列哪项正确？";
    for (std::size_t l = 0; l < labels.size(); ++l) item.options[labels[l]] = "选项" + std::to_string(i * 10 + l);
    item.gold = labels[i % labels.size()];
    item.qtype = i < a1 ? cf::data::McqType::A1 : cf::data::McqType::A2;
    f.items.push_back(item);
  }
  return f;
}

}  // namespace fixtures
