#include <gtest/gtest.h>

#include <atomic>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/judging.hpp"
#include "fixtures.hpp"

namespace cf = corpusforge;
namespace jg = corpusforge::judge;

namespace {

const cf::augment::TemplateLibrary& lib() {
  static const auto l = cf::augment::TemplateLibrary::builtin();
  return l;
}

std::vector<jg::DialogueItem> bench(std::size_t n) {
  std::vector<jg::DialogueItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({"d" + std::to_string(i), i % 2 ? "diet" : "drug", "问题" + std::to_string(i), "规则"});
  }
  return items;
}

}  // namespace

TEST(ParseScore, SyntheticReplies) {
  const char* layouts[] = {
      "理由：回答准确。\nScore: %d",
      "The response is fine.\nscore：%d",
      "**Score:** %d",
      "Reasoning first.\n\nSCORE : %d\n",
      "Score: 2 at first glance, but after review\nScore: %d",
  };
  cf::Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const int s = 1 + static_cast<int>(rng.below(10));
    char buf[160];
    std::snprintf(buf, sizeof buf, layouts[i % 5], s);
    const auto p = jg::parse_score(buf);
    ASSERT_TRUE(p.score) << buf;
    EXPECT_EQ(*p.score, s) << buf;
    EXPECT_FALSE(p.clamped);
  }
}

TEST(ParseScore, EdgeCases) {
  EXPECT_EQ(jg::parse_score("Score: 8").score, 8.0);
  EXPECT_EQ(jg::parse_score("Score: 7.5").score, 7.5);
  const auto hi = jg::parse_score("Score: 12");
  EXPECT_EQ(hi.score, 10.0);
  EXPECT_TRUE(hi.clamped);
  EXPECT_EQ(jg::parse_score("Score: 0").score, 1.0);
  EXPECT_FALSE(jg::parse_score("I would give it an 8").score);
  EXPECT_FALSE(jg::parse_score("Score: ten").score);
  EXPECT_FALSE(jg::parse_score("").score);
}

TEST(JudgePrompt, SlotsFilled) {
  const auto items = bench(1);
  const auto p = jg::render_judge_prompt(items[0], "候选回答", lib());
  EXPECT_NE(p.find("问题0"), std::string::npos);
  EXPECT_NE(p.find("规则"), std::string::npos);
  EXPECT_NE(p.find("候选回答"), std::string::npos);
}

TEST(JudgeDialogue, MeansAndExclusions) {
  auto judge = fixtures::scripted_client([](const std::string& p) -> std::string {
    if (p.find("问题1\n") != std::string::npos) return "no number here";
    if (p.find("问题2\n") != std::string::npos) return "Score: 4";
    return "Score: 9";
  });
  const auto items = bench(3);
  const auto j = jg::judge_dialogue(items, {"a", "b", "c"}, *judge, lib(), 2);
  ASSERT_EQ(j.items.size(), 3u);
  EXPECT_EQ(j.items[0].mean, 9.0);
  EXPECT_FALSE(j.items[1].mean);
  EXPECT_TRUE(j.items[1].trials[0].retried);
  EXPECT_EQ(j.excluded, std::vector<std::string>{"d1"});
  EXPECT_EQ(j.scored, 2u);
  EXPECT_DOUBLE_EQ(*j.mean, 6.5);
  EXPECT_THROW(jg::judge_dialogue(items, {"a"}, *judge, lib()), cf::ValidationError);
}

TEST(JudgeDialogue, TrialsAreDistinctCalls) {
  auto cache = std::make_shared<cf::llm::ResponseCache>();
  auto judge = fixtures::scripted_client([](const std::string&) { return "Score: 5"; }, "j", 4, cache);
  jg::judge_dialogue(bench(4), {"a", "b", "c", "d"}, *judge, lib(), 3);
  EXPECT_EQ(judge->stats().network_calls, 12u);
  jg::judge_dialogue(bench(4), {"a", "b", "c", "d"}, *judge, lib(), 3);
  EXPECT_EQ(judge->stats().network_calls, 12u);
}

TEST(ParseChoice, StandaloneLetters) {
  EXPECT_EQ(jg::parse_choice("A"), 'A');
  EXPECT_EQ(jg::parse_choice("我选择B。"), 'B');
  EXPECT_EQ(jg::parse_choice("Ｂ"), 'B');
  EXPECT_EQ(jg::parse_choice("Response A is better"), 'A');
  EXPECT_FALSE(jg::parse_choice("Both are bad"));
  EXPECT_FALSE(jg::parse_choice(""));
}

TEST(Pairwise, PositionBiasCancelsWithSwap) {
  auto first_always = fixtures::scripted_client([](const std::string&) { return "A"; });
  const auto t = jg::pairwise_compare("问", "甲", "乙", *first_always, lib(), 2, true);
  EXPECT_EQ(t.a, 2u);
  EXPECT_EQ(t.b, 2u);
  EXPECT_DOUBLE_EQ(*t.rate_a(), 0.5);
}

TEST(Pairwise, ContentPreferenceSurvivesSwap) {
  auto judge = fixtures::scripted_client([](const std::string& p) {
    return p.find("Response A: 好") != std::string::npos ? "A" : "B";
  });
  const auto t = jg::pairwise_compare("问", "好", "差", *judge, lib(), 3, true);
  EXPECT_EQ(t.a, 6u);
  EXPECT_EQ(t.b, 0u);
  const auto u = jg::pairwise_compare("问", "差", "好", *judge, lib(), 3, true);
  EXPECT_EQ(u.b, 6u);
  for (const auto& v : u.verdicts) EXPECT_EQ(v.choice, 'B');
}

TEST(Pairwise, InvalidVerdictsCountedSeparately) {
  auto judge = fixtures::scripted_client([](const std::string&) { return "neither"; });
  auto t = jg::pairwise_compare("问", "x", "y", *judge, lib(), 1, false);
  EXPECT_EQ(t.invalid, 1u);
  EXPECT_FALSE(t.rate_a());
  jg::PairwiseTally sum;
  sum += t;
  sum += t;
  EXPECT_EQ(sum.invalid, 2u);
  EXPECT_EQ(jg::to_json(sum).at("invalid"), 2);
}

TEST(DialogueItem, JsonDefaults) {
  const auto item = jg::dialogue_item_from_json({{"question", "q"}, {"rules", "r"}}, 7);
  EXPECT_EQ(item.id, "7");
  EXPECT_THROW(jg::dialogue_item_from_json({{"question", "q"}}, 1), cf::ValidationError);
}
