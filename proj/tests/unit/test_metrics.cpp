#include <gtest/gtest.h>

#include <cmath>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/metrics.hpp"
#include "oracles.hpp"

namespace cf = corpusforge;
namespace m = corpusforge::metrics;

namespace {

m::TokenSeq random_tokens(cf::Rng& rng, std::size_t max_len) {
  static const char* vocab[] = {"糖", "尿", "病", "血", "压", "a", "b", "c"};
  m::TokenSeq t(rng.below(max_len + 1));
  for (auto& s : t) s = vocab[rng.below(8)];
  return t;
}

}  // namespace

TEST(Tokenize, CjkPerCharacterLatinRuns) {
  EXPECT_EQ(m::tokenize("2型糖尿病 HbA1c，ｍｇ/dL"),
            (m::TokenSeq{"2", "型", "糖", "尿", "病", "hba1c", "mg", "dl"}));
  EXPECT_TRUE(m::tokenize("，。！ ...").empty());
}

TEST(Metrics, KnownValues) {
  const m::TokenSeq ref{"the", "cat", "sat", "on", "the", "mat"};
  const m::TokenSeq cand{"the", "cat", "on", "the", "mat"};
  const auto r1 = m::rouge_n(cand, ref, 1);
  EXPECT_DOUBLE_EQ(r1.precision, 1.0);
  EXPECT_DOUBLE_EQ(r1.recall, 5.0 / 6.0);
  EXPECT_EQ(m::lcs_length(cand, ref), 5u);
  EXPECT_DOUBLE_EQ(m::bleu(ref, ref), 1.0);
  EXPECT_DOUBLE_EQ(m::bleu({}, ref), 0.0);
  EXPECT_DOUBLE_EQ(m::rouge_n({}, ref, 1).f, 0.0);
  EXPECT_DOUBLE_EQ(m::rouge_l(ref, {}).f, 0.0);
}

TEST(Metrics, ClippingLimitsRepeatedTokens) {
  const auto r = m::rouge_n({"的", "的", "的"}, {"的", "病"}, 1);
  EXPECT_DOUBLE_EQ(r.precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
}

TEST(Metrics, MatchBruteForceOracles) {
  cf::Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_tokens(rng, 12), b = random_tokens(rng, 12);
    for (std::size_t n : {1u, 2u}) {
      const auto got = m::rouge_n(a, b, n);
      const auto want = oracle::rouge_n(a, b, n);
      EXPECT_NEAR(got.precision, want.p, 1e-12);
      EXPECT_NEAR(got.recall, want.r, 1e-12);
      EXPECT_NEAR(got.f, want.f, 1e-12);
    }
    EXPECT_EQ(m::lcs_length(a, b), oracle::lcs_by_enumeration(a, b));
    EXPECT_NEAR(m::rouge_l(a, b).f, oracle::rouge_l(a, b).f, 1e-12);
    EXPECT_NEAR(m::bleu(a, b), oracle::bleu(a, b), 1e-12);
  }
}

TEST(BertScore, IdenticalIsOneAndOrthogonalIsZero) {
  const auto e = m::TokenEmbeddings::from_vectors({{1, 0, 0}, {0, 1, 0}});
  const auto s = m::bertscore(e, e);
  EXPECT_NEAR(s.f, 1.0, 1e-12);
  const auto o = m::TokenEmbeddings::from_vectors({{0, 0, 1}});
  EXPECT_NEAR(m::bertscore(o, e).f, 0.0, 1e-12);
}

TEST(BertScore, GreedyMatchValues) {
  // Best match per candidate row is 1 and 0.8, per reference row 1 and 0.8.
  const auto cand = m::TokenEmbeddings::from_vectors({{1, 0}, {0.6, 0.8}});
  const auto ref = m::TokenEmbeddings::from_vectors({{1, 0}, {0, 1}});
  const auto s = m::bertscore(cand, ref);
  EXPECT_NEAR(s.precision, (1.0 + 0.8) / 2.0, 1e-12);
  EXPECT_NEAR(s.recall, (1.0 + 0.8) / 2.0, 1e-12);
  EXPECT_THROW(m::bertscore(m::TokenEmbeddings{}, ref), cf::ValidationError);
}

TEST(ExtractMcq, Cascade) {
  const std::map<std::string, std::string> opts{{"A", "二甲双胍"}, {"B", "格列本脲"}, {"C", "阿卡波糖"}};
  EXPECT_EQ(m::extract_mcq_answer("分析……答案：B", opts), "B");
  EXPECT_EQ(m::extract_mcq_answer("答案是A。但再想想，答案应为 C", opts), "C");
  EXPECT_EQ(m::extract_mcq_answer("The answer is B.", opts), "B");
  EXPECT_EQ(m::extract_mcq_answer("解析\n(C)\n", opts), "C");
  EXPECT_EQ(m::extract_mcq_answer("解析\n应选阿卡波糖", opts), "C");
  EXPECT_FALSE(m::extract_mcq_answer("不知道", opts));
  EXPECT_FALSE(m::extract_mcq_answer("答案：E", opts));
  EXPECT_FALSE(m::extract_mcq_answer("二甲双胍或阿卡波糖", opts));
}

TEST(Accuracy, SubsetsAndMissing) {
  std::vector<std::optional<std::string>> pred{"A", std::nullopt, "C", "D"};
  std::vector<std::string> gold{"A", "B", "C", "A"};
  std::vector<std::string> sub{"A1", "A1", "A2", "A2"};
  const auto r = m::accuracy(pred, gold, sub);
  EXPECT_EQ(r.overall.correct, 2u);
  EXPECT_EQ(r.overall.total, 4u);
  EXPECT_EQ(r.by_subset.at("A1").correct, 1u);
  EXPECT_EQ(r.by_subset.at("A2").total, 2u);
  std::vector<std::string> short_gold{"A"};
  EXPECT_THROW(m::accuracy(pred, short_gold), cf::ValidationError);
}

TEST(FormatPercent, OneDecimal) {
  EXPECT_EQ(m::format_percent(272.0 / 312.0), "87.2%");
  EXPECT_EQ(m::format_percent(0.0), "0.0%");
  EXPECT_EQ(m::format_percent(1.0), "100.0%");
}
