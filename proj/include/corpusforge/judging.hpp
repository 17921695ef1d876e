#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "corpusforge/llm_client.hpp"
#include "corpusforge/templates.hpp"

namespace corpusforge::judge {

struct DialogueItem {
  std::string id;
  std::string category;
  std::string question;
  std::string rules;

  void validate() const;
};

// Schema: {"id"?, "category"?, "question", "rules"}. Missing id becomes the
// 1-based position supplied by the caller.
DialogueItem dialogue_item_from_json(const nlohmann::json& j, std::size_t position);
nlohmann::json to_json(const DialogueItem& item);

struct ParsedScore {
  std::optional<double> score;
  bool clamped = false;
};

// Last "Score:" (any case, ASCII or full-width colon) followed by a number.
// Out-of-range values clamp into [1, 10] with `clamped` set.
ParsedScore parse_score(std::string_view reply);

enum class Order { none, ab, ba };
std::string_view to_string(Order order);

struct JudgeVerdict {
  std::string raw;
  std::optional<double> score;
  bool clamped = false;
  bool retried = false;
  std::string model;
  std::size_t trial = 0;
  Order order = Order::none;
};

struct ItemJudgement {
  DialogueItem item;
  std::vector<JudgeVerdict> trials;
  std::optional<double> mean;  // over parsed trials
};

struct DialogueJudgement {
  std::string model;
  std::vector<ItemJudgement> items;
  std::optional<double> mean;  // over items with at least one parsed trial
  std::size_t scored = 0;
  std::vector<std::string> excluded;  // ids of items without any parsed trial
};

std::string render_judge_prompt(const DialogueItem& item, const std::string& output,
                                const augment::TemplateLibrary& templates);

// trials >= 1. Trial t uses its own cache salt, so repeated trials are
// distinct calls. An unparsed trial is retried once with the cache bypassed.
DialogueJudgement judge_dialogue(const std::vector<DialogueItem>& bench, const std::vector<std::string>& outputs,
                                 llm::LlmClient& judge, const augment::TemplateLibrary& templates,
                                 std::size_t trials = 1);

nlohmann::json to_json(const DialogueJudgement& judgement);

// First standalone 'A' or 'B' token (ASCII or full-width).
std::optional<char> parse_choice(std::string_view reply);

struct PairwiseVerdict {
  std::string raw;
  std::size_t trial = 0;
  Order order = Order::ab;
  std::optional<char> choice;  // relabeled to the caller's identities
};

struct PairwiseTally {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t invalid = 0;
  std::vector<PairwiseVerdict> verdicts;

  std::size_t valid() const { return a + b; }
  // Undefined (nullopt) when no verdict was valid.
  std::optional<double> rate_a() const;
  std::optional<double> rate_b() const;
  PairwiseTally& operator+=(const PairwiseTally& other);
};

std::string render_pairwise_prompt(const std::string& question, const std::string& first, const std::string& second,
                                   const augment::TemplateLibrary& templates);

PairwiseTally pairwise_compare(const std::string& question, const std::string& answer_a, const std::string& answer_b,
                               llm::LlmClient& judge, const augment::TemplateLibrary& templates,
                               std::size_t trials = 3, bool swap_orders = true);

nlohmann::json to_json(const PairwiseTally& tally);

}  // namespace corpusforge::judge
