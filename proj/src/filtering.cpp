#include "corpusforge/filtering.hpp"

#include <fstream>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/utf8.hpp"

namespace corpusforge::filter {

using nlohmann::json;

void KeywordRuleSet::validate() const {
  if (positive.empty()) throw ValidationError("rule set needs at least one positive keyword");
  for (const auto* list : {&positive, &negative}) {
    for (const auto& kw : *list) {
      if (kw.empty()) throw ValidationError("keywords must not be empty strings");
      if (!utf8::is_valid(kw)) throw ValidationError("keyword is not valid UTF-8");
    }
  }
}

KeywordRuleSet rules_from_json(const json& j) {
  KeywordRuleSet rules;
  if (!j.is_object()) throw ValidationError("rule file must be a JSON object");
  rules.positive = j.value("positive", std::vector<std::string>{});
  rules.negative = j.value("negative", std::vector<std::string>{});
  rules.fold_case = j.value("fold_case", true);
  rules.normalize_width = j.value("normalize_width", true);
  rules.validate();
  return rules;
}

KeywordRuleSet load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rule file " + path);
  try {
    return rules_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError("rule file " + path + ": " + e.what());
  }
}

json to_json(const KeywordRuleSet& r) {
  return json{{"positive", r.positive},
              {"negative", r.negative},
              {"fold_case", r.fold_case},
              {"normalize_width", r.normalize_width}};
}

json to_json(const FilterReport& r) {
  return json{{"kept", r.kept},
              {"dropped_no_positive", r.dropped_no_positive},
              {"dropped_negative", r.dropped_negative},
              {"positive_hits", r.positive_hits},
              {"negative_hits", r.negative_hits}};
}

namespace {

std::string normalize(std::string_view text, const KeywordRuleSet& rules) {
  std::string out = rules.normalize_width ? utf8::normalize_width(text) : std::string(text);
  if (rules.fold_case) out = utf8::fold_ascii_case(out);
  return out;
}

}  // namespace

FilterResult apply_filter(const data::Corpus& corpus, const KeywordRuleSet& rules) {
  rules.validate();
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  for (const auto& kw : rules.positive) positives.push_back(normalize(kw, rules));
  for (const auto& kw : rules.negative) negatives.push_back(normalize(kw, rules));

  FilterResult result;
  for (const auto& kw : rules.positive) result.report.positive_hits[kw] = 0;
  for (const auto& kw : rules.negative) result.report.negative_hits[kw] = 0;

  std::vector<data::Record> kept;
  std::vector<data::Record> dropped;
  for (const data::Record& record : corpus) {
    // The separator keeps a keyword from matching across the field boundary.
    const std::string haystack = normalize(record.instruction + "\n" + record.response, rules);
    bool any_positive = false;
    bool any_negative = false;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      if (haystack.find(positives[i]) != std::string::npos) {
        any_positive = true;
        ++result.report.positive_hits[rules.positive[i]];
      }
    }
    for (std::size_t i = 0; i < negatives.size(); ++i) {
      if (haystack.find(negatives[i]) != std::string::npos) {
        any_negative = true;
        ++result.report.negative_hits[rules.negative[i]];
      }
    }
    if (any_negative) {
      ++result.report.dropped_negative;
      dropped.push_back(record);
    } else if (!any_positive) {
      ++result.report.dropped_no_positive;
      dropped.push_back(record);
    } else {
      ++result.report.kept;
      kept.push_back(record);
    }
  }
  result.kept = data::Corpus(std::move(kept), corpus.provenance()).with_step("filter:kept");
  result.dropped = data::Corpus(std::move(dropped), corpus.provenance()).with_step("filter:dropped");
  return result;
}

}  // namespace corpusforge::filter
