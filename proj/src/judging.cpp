#include "corpusforge/judging.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/parallel.hpp"
#include "corpusforge/common/utf8.hpp"

namespace corpusforge::judge {

namespace {

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string salt(std::size_t trial) { return "trial:" + std::to_string(trial); }

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

bool ascii_alnum(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}

}  // namespace

void DialogueItem::validate() const {
  if (blank(question)) throw ValidationError("dialogue item " + id + ": question must be non-empty");
  if (blank(rules)) throw ValidationError("dialogue item " + id + ": rules must be non-empty");
}

DialogueItem dialogue_item_from_json(const nlohmann::json& j, std::size_t position) {
  if (!j.is_object()) throw ValidationError("dialogue item must be a JSON object");
  DialogueItem item;
  item.id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(position);
  item.category = j.value("category", std::string{});
  if (!j.contains("question") || !j.contains("rules")) {
    throw ValidationError("dialogue item " + item.id + ": needs question and rules");
  }
  item.question = j.at("question").get<std::string>();
  item.rules = j.at("rules").get<std::string>();
  item.validate();
  return item;
}

nlohmann::json to_json(const DialogueItem& item) {
  return {{"id", item.id}, {"category", item.category}, {"question", item.question}, {"rules", item.rules}};
}

ParsedScore parse_score(std::string_view reply) {
  static const std::regex pattern(R"(score\**[ \t]*(?::|：)[ \t]*\**[ \t]*([+-]?[0-9]+(?:\.[0-9]+)?))",
                                  std::regex::icase | std::regex::ECMAScript);
  ParsedScore out;
  const std::string text(reply);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  if (!last) return out;
  double v = std::strtod(last->c_str(), nullptr);
  if (v < 1.0 || v > 10.0) {
    out.clamped = true;
    v = std::clamp(v, 1.0, 10.0);
  }
  out.score = v;
  return out;
}

std::string_view to_string(Order order) {
  switch (order) {
    case Order::none: return "none";
    case Order::ab: return "AB";
    case Order::ba: return "BA";
  }
  return "none";
}

std::string render_judge_prompt(const DialogueItem& item, const std::string& output,
                                const augment::TemplateLibrary& templates) {
  return templates.get(augment::TemplateId::judge)
      .render({{"instruction", item.question}, {"rule", item.rules}, {"output", output}});
}

DialogueJudgement judge_dialogue(const std::vector<DialogueItem>& bench, const std::vector<std::string>& outputs,
                                 llm::LlmClient& judge, const augment::TemplateLibrary& templates,
                                 std::size_t trials) {
  if (bench.size() != outputs.size()) throw ValidationError("judge_dialogue: one output per benchmark item required");
  if (trials == 0) throw ValidationError("judge_dialogue: trials must be >= 1");
  for (const auto& item : bench) item.validate();

  DialogueJudgement result;
  result.model = judge.endpoint().model;
  std::vector<JudgeVerdict> verdicts(bench.size() * trials);
  parallel_for(verdicts.size(), static_cast<std::size_t>(judge.endpoint().max_in_flight), [&](std::size_t k) {
    const std::size_t i = k / trials;
    const std::size_t t = k % trials;
    JudgeVerdict& v = verdicts[k];
    v.model = result.model;
    v.trial = t;
    const std::string prompt = render_judge_prompt(bench[i], outputs[i], templates);
    try {
      v.raw = judge.chat_user(prompt, {.sampling = std::nullopt, .bypass_cache = false, .cache_salt = salt(t)}).reply;
      ParsedScore p = parse_score(v.raw);
      if (!p.score) {
        v.retried = true;
        v.raw = judge.chat_user(prompt, {.sampling = std::nullopt, .bypass_cache = true, .cache_salt = salt(t)}).reply;
        p = parse_score(v.raw);
      }
      v.score = p.score;
      v.clamped = p.clamped;
      if (p.clamped) log::warn("judge item " + bench[i].id + ": score outside [1, 10] clamped");
    } catch (const Error& e) {
      v.raw.clear();
      log::warn("judge item " + bench[i].id + " trial " + std::to_string(t) + ": " + e.what());
    }
  });

  double total = 0.0;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    ItemJudgement ij;
    ij.item = bench[i];
    double sum = 0.0;
    std::size_t parsed = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      JudgeVerdict& v = verdicts[i * trials + t];
      if (v.score) {
        sum += *v.score;
        ++parsed;
      }
      ij.trials.push_back(std::move(v));
    }
    if (parsed > 0) {
      ij.mean = sum / static_cast<double>(parsed);
      total += *ij.mean;
      ++result.scored;
    } else {
      result.excluded.push_back(bench[i].id);
    }
    result.items.push_back(std::move(ij));
  }
  if (result.scored > 0) result.mean = total / static_cast<double>(result.scored);
  return result;
}

nlohmann::json to_json(const DialogueJudgement& judgement) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& ij : judgement.items) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& v : ij.trials) {
      trials.push_back({{"trial", v.trial},
                        {"score", optional_number(v.score)},
                        {"clamped", v.clamped},
                        {"retried", v.retried},
                        {"raw", v.raw}});
    }
    items.push_back({{"id", ij.item.id}, {"category", ij.item.category}, {"mean", optional_number(ij.mean)},
                     {"trials", trials}});
  }
  return {{"judge_model", judgement.model},
          {"mean", optional_number(judgement.mean)},
          {"scored", judgement.scored},
          {"excluded", judgement.excluded},
          {"items", items}};
}

std::optional<char> parse_choice(std::string_view reply) {
  std::u32string s;
  try {
    for (char32_t c : utf8::decode(reply)) s.push_back(utf8::to_half_width(c));
  } catch (const Error&) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != U'A' && s[i] != U'B') continue;
    const bool left = i == 0 || !ascii_alnum(s[i - 1]);
    const bool right = i + 1 == s.size() || !ascii_alnum(s[i + 1]);
    if (left && right) return static_cast<char>(s[i]);
  }
  return std::nullopt;
}

std::optional<double> PairwiseTally::rate_a() const {
  if (valid() == 0) return std::nullopt;
  return static_cast<double>(a) / static_cast<double>(valid());
}

std::optional<double> PairwiseTally::rate_b() const {
  if (valid() == 0) return std::nullopt;
  return static_cast<double>(b) / static_cast<double>(valid());
}

PairwiseTally& PairwiseTally::operator+=(const PairwiseTally& other) {
  a += other.a;
  b += other.b;
  invalid += other.invalid;
  verdicts.insert(verdicts.end(), other.verdicts.begin(), other.verdicts.end());
  return *this;
}

std::string render_pairwise_prompt(const std::string& question, const std::string& first, const std::string& second,
                                   const augment::TemplateLibrary& templates) {
  return templates.get(augment::TemplateId::pairwise).render({{"question", question}, {"A", first}, {"B", second}});
}

PairwiseTally pairwise_compare(const std::string& question, const std::string& answer_a, const std::string& answer_b,
                               llm::LlmClient& judge, const augment::TemplateLibrary& templates,
                               std::size_t trials, bool swap_orders) {
  if (trials == 0) throw ValidationError("pairwise_compare: trials must be >= 1");
  const std::size_t orders = swap_orders ? 2 : 1;
  std::vector<PairwiseVerdict> verdicts(trials * orders);
  parallel_for(verdicts.size(), static_cast<std::size_t>(judge.endpoint().max_in_flight), [&](std::size_t k) {
    PairwiseVerdict& v = verdicts[k];
    v.trial = k / orders;
    v.order = k % orders == 0 ? Order::ab : Order::ba;
    const bool ab = v.order == Order::ab;
    const std::string prompt =
        render_pairwise_prompt(question, ab ? answer_a : answer_b, ab ? answer_b : answer_a, templates);
    try {
      // The salt is per trial only: the BA prompt of (a, b) equals the AB
      // prompt of (b, a), so swapped calls share cache entries.
      v.raw = judge.chat_user(prompt, {.sampling = std::nullopt, .bypass_cache = false, .cache_salt = salt(v.trial)}).reply;
    } catch (const Error& e) {
      log::warn(std::string("pairwise trial failed: ") + e.what());
      return;
    }
    if (auto c = parse_choice(v.raw)) v.choice = ab ? *c : (*c == 'A' ? 'B' : 'A');
  });
  PairwiseTally tally;
  for (auto& v : verdicts) {
    if (!v.choice) {
      ++tally.invalid;
    } else if (*v.choice == 'A') {
      ++tally.a;
    } else {
      ++tally.b;
    }
    tally.verdicts.push_back(std::move(v));
  }
  if (tally.valid() == 0) log::warn("pairwise comparison: no valid verdicts, preference rate undefined");
  return tally;
}

nlohmann::json to_json(const PairwiseTally& tally) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : tally.verdicts) {
    verdicts.push_back({{"trial", v.trial},
                        {"order", to_string(v.order)},
                        {"choice", v.choice ? nlohmann::json(std::string(1, *v.choice)) : nlohmann::json(nullptr)},
                        {"raw", v.raw}});
  }
  return {{"a", tally.a},
          {"b", tally.b},
          {"invalid", tally.invalid},
          {"rate_a", optional_number(tally.rate_a())},
          {"rate_b", optional_number(tally.rate_b())},
          {"verdicts", verdicts}};
}

}  // namespace corpusforge::judge
