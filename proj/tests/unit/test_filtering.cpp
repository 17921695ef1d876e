#include <gtest/gtest.h>

#include <algorithm>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/filtering.hpp"

namespace cf = corpusforge;
using cf::data::Kind;
using cf::data::Record;

namespace {

cf::filter::KeywordRuleSet rules(std::vector<std::string> pos, std::vector<std::string> neg = {}) {
  cf::filter::KeywordRuleSet r;
  r.positive = std::move(pos);
  r.negative = std::move(neg);
  return r;
}

}  // namespace

TEST(Filter, PositiveMatchKept) {
  cf::data::Corpus c({Record::make(Kind::dialogue, "What precipitates DKA?", "Infection, missed insulin.")});
  auto res = cf::filter::apply_filter(c, rules({"DKA"}));
  EXPECT_EQ(res.kept.size(), 1u);
  EXPECT_EQ(res.report.kept, 1u);
}

TEST(Filter, NegativeWinsOverPositive) {
  cf::data::Corpus c({Record::make(Kind::dialogue, "Low blood sugar at night", "Could be an insulinoma.")});
  auto res = cf::filter::apply_filter(c, rules({"blood sugar"}, {"insulinoma"}));
  EXPECT_TRUE(res.kept.empty());
  EXPECT_EQ(res.report.dropped_negative, 1u);
  EXPECT_EQ(res.report.negative_hits["insulinoma"], 1u);
}

TEST(Filter, NoPositiveDropped) {
  cf::data::Corpus c({Record::make(Kind::dialogue, "How to treat a sprained ankle?", "Rest and ice.")});
  auto res = cf::filter::apply_filter(c, rules({"diabetes"}));
  EXPECT_EQ(res.report.dropped_no_positive, 1u);
  EXPECT_EQ(res.dropped.size(), 1u);
}

TEST(Filter, CaseFoldingAndWidthNormalization) {
  cf::data::Corpus c({Record::make(Kind::dialogue, "ｈｂａ１ｃ target?", "below 7%"),
                      Record::make(Kind::dialogue, "DIABETES diet", "fiber")});
  auto res = cf::filter::apply_filter(c, rules({"HbA1c", "diabetes"}));
  EXPECT_EQ(res.kept.size(), 2u);

  auto strict = rules({"HbA1c", "diabetes"});
  strict.fold_case = false;
  strict.normalize_width = false;
  EXPECT_EQ(cf::filter::apply_filter(c, strict).kept.size(), 0u);
}

TEST(Filter, MatchesAcrossInstructionAndResponse) {
  cf::data::Corpus c({Record::make(Kind::dialogue, "What about metformin?", "It is first line for 糖尿病.")});
  EXPECT_EQ(cf::filter::apply_filter(c, rules({"糖尿病"})).kept.size(), 1u);
}

TEST(Filter, PartitionIndependentOfOrder) {
  std::vector<Record> recs;
  for (int i = 0; i < 30; ++i) {
    const std::string text = i % 3 == 0 ? "diabetes" : (i % 3 == 1 ? "insulinoma diabetes" : "cold");
    recs.push_back(Record::make(Kind::dialogue, text + " " + std::to_string(i), "r"));
  }
  auto reversed = recs;
  std::reverse(reversed.begin(), reversed.end());
  const auto r = rules({"diabetes"}, {"insulinoma"});
  auto a = cf::filter::apply_filter(cf::data::Corpus(recs), r);
  auto b = cf::filter::apply_filter(cf::data::Corpus(reversed), r);
  std::vector<std::string> ia, ib;
  for (const auto& x : a.kept) ia.push_back(x.id);
  for (const auto& x : b.kept) ib.push_back(x.id);
  std::sort(ia.begin(), ia.end());
  std::sort(ib.begin(), ib.end());
  EXPECT_EQ(ia, ib);
  EXPECT_EQ(a.report.kept + a.report.dropped_negative + a.report.dropped_no_positive, 30u);
}

TEST(Filter, InvalidRulesRejected) {
  EXPECT_THROW(rules({}).validate(), cf::ValidationError);
  EXPECT_THROW(rules({""}).validate(), cf::ValidationError);
  EXPECT_THROW(cf::filter::rules_from_json(nlohmann::json::array()), cf::ValidationError);
}

TEST(Filter, StarterRuleFileLoads) {
  auto r = cf::filter::load_rules(CORPUSFORGE_SOURCE_DIR "/config/keywords.starter.json");
  EXPECT_FALSE(r.positive.empty());
  EXPECT_NE(std::find(r.negative.begin(), r.negative.end(), "insulinoma"), r.negative.end());
}
