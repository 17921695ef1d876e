#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "corpusforge/data_model.hpp"
#include "corpusforge/judging.hpp"
#include "corpusforge/llm_client.hpp"
#include "corpusforge/metrics.hpp"
#include "corpusforge/templates.hpp"

namespace corpusforge::bench {

enum class BenchKind { mcq, fb, dialogue };
std::string_view to_string(BenchKind kind);

struct FbItem {
  std::string id;
  std::string question;
  std::string answer;
};

// JSONL loaders. mcq: {"id"?, "stem", "options": {"A": ...}, "gold", "qtype"};
// fb: {"id"?, "question", "answer"}; dialogue: {"id"?, "category"?,
// "question", "rules"}. A bad line throws with its line number.
std::vector<data::McqItem> load_mcq_dataset(const std::string& path);
std::vector<FbItem> load_fb_dataset(const std::string& path);
std::vector<judge::DialogueItem> load_dialogue_dataset(const std::string& path);

struct ReportRow {
  std::string id;
  std::map<std::string, double> values;
  std::map<std::string, std::string> labels;

  bool operator==(const ReportRow&) const = default;
};

struct MetricReport {
  BenchKind kind = BenchKind::mcq;
  std::vector<std::string> columns;  // table order; "id" is implicit first
  std::vector<ReportRow> rows;
  std::map<std::string, double> summary;
  nlohmann::json fingerprint = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const MetricReport&) const = default;
};

nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

// Table: header then one row per example, numbers printed with 4 decimals;
// a summary block follows when summary is non-empty.
std::string render_table(const MetricReport& report);
std::string render_json(const MetricReport& report);

struct Fingerprint {
  std::map<std::string, const llm::LlmClient*> endpoints;  // role -> client
  std::vector<augment::TemplateId> templates;
  std::map<std::string, std::uint64_t> seeds;
};
nlohmann::json make_fingerprint(const Fingerprint& fp, const augment::TemplateLibrary& library);

std::string render_mcq_prompt(const data::McqItem& item, const augment::TemplateLibrary& templates);

struct McqRun {
  MetricReport report;
  metrics::AccuracyReport accuracy;
  std::size_t unanswered = 0;
};

// Unanswered items (endpoint failure or no extractable label) count as
// incorrect.
McqRun run_mcq(const std::vector<data::McqItem>& items, llm::LlmClient& model,
               const augment::TemplateLibrary& templates);

// Maps a token sequence to one unit vector per token.
using TokenEmbedder = std::function<metrics::TokenEmbeddings(const metrics::TokenSeq&)>;

// Embeds each token text through the endpoint's embeddings API.
TokenEmbedder endpoint_token_embedder(llm::LlmClient& embedder);

// Per-example ROUGE-1/2/L F, BLEU and, with an embedder, BERTScore F.
MetricReport run_fb(const std::vector<FbItem>& items, llm::LlmClient& model,
                    const augment::TemplateLibrary& templates, const TokenEmbedder& embedder = {});

// Scores already-generated answers; no model calls.
MetricReport score_fb(const std::vector<FbItem>& items, const std::vector<std::string>& replies,
                      const TokenEmbedder& embedder = {});

struct DialogueRun {
  MetricReport report;
  judge::DialogueJudgement judgement;
  std::size_t unanswered = 0;
};

// The candidate answers every question, then the judge scores them. An
// unanswered item is judged with an empty response.
DialogueRun run_dialogue(const std::vector<judge::DialogueItem>& items, llm::LlmClient& candidate,
                         llm::LlmClient& judge_client, const augment::TemplateLibrary& templates,
                         std::size_t trials = 1);

}  // namespace corpusforge::bench
