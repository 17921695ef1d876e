#pragma once

#include <map>
#include <string>
#include <vector>

#include "corpusforge/data_model.hpp"
#include "json.hpp"

namespace corpusforge::filter {

struct KeywordRuleSet {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  bool fold_case = true;
  bool normalize_width = true;

  // Throws ValidationError: positive must be non-empty, no empty keyword.
  void validate() const;
};

KeywordRuleSet rules_from_json(const nlohmann::json& j);
KeywordRuleSet load_rules(const std::string& path);
nlohmann::json to_json(const KeywordRuleSet& rules);

struct FilterReport {
  std::size_t kept = 0;
  std::size_t dropped_no_positive = 0;
  std::size_t dropped_negative = 0;
  // Number of records in which each keyword occurs (positives and negatives).
  std::map<std::string, std::size_t> positive_hits;
  std::map<std::string, std::size_t> negative_hits;
};

nlohmann::json to_json(const FilterReport& report);

struct FilterResult {
  data::Corpus kept;
  data::Corpus dropped;
  FilterReport report;
};

// A record is kept iff some positive keyword is a substring of its
// instruction and response and no negative keyword is. Case folding and
// width normalization are applied to both text and keywords first.
FilterResult apply_filter(const data::Corpus& corpus, const KeywordRuleSet& rules);

}  // namespace corpusforge::filter
