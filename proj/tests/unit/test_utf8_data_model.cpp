#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/common/utf8.hpp"
#include "corpusforge/data_model.hpp"

namespace cf = corpusforge;
using cf::data::Kind;

TEST(Utf8, CountsScalarsNotBytes) {
  EXPECT_EQ(cf::utf8::count_scalars("abc"), 3u);
  EXPECT_EQ(cf::utf8::count_scalars("糖尿病"), 3u);
  EXPECT_EQ(cf::utf8::count_scalars("a😀"), 2u);
  EXPECT_EQ(cf::utf8::count_scalars(""), 0u);
}

TEST(Utf8, RejectsInvalidSequences) {
  EXPECT_FALSE(cf::utf8::is_valid("\xC3"));
  EXPECT_FALSE(cf::utf8::is_valid("\xED\xA0\x80"));  // surrogate
  EXPECT_FALSE(cf::utf8::is_valid("\xC0\xAF"));      // overlong
  EXPECT_THROW(cf::utf8::decode("\xFF"), cf::ValidationError);
}

TEST(Utf8, WidthAndCase) {
  EXPECT_EQ(cf::utf8::normalize_width("ＨｂＡ１ｃ　７％"), "HbA1c 7%");
  EXPECT_EQ(cf::utf8::fold_ascii_case("GLP-1 糖"), "glp-1 糖");
  EXPECT_EQ(cf::utf8::prefix_scalars("糖尿病患者", 3), "糖尿病");
}

TEST(Utf8, EncodeDecodeRoundTrip) {
  const std::string s = "x糖😀\n";
  EXPECT_EQ(cf::utf8::encode(cf::utf8::decode(s)), s);
}

TEST(Record, IdIsFunctionOfKindInstructionResponse) {
  auto a = cf::data::Record::make(Kind::dialogue, "q", "r", "src1");
  auto b = cf::data::Record::make(Kind::dialogue, "q", "r", "src2", "zh", {{"m", "1"}});
  auto c = cf::data::Record::make(Kind::mcq, "q", "r");
  EXPECT_EQ(a.id, b.id);
  EXPECT_NE(a.id, c.id);
  EXPECT_EQ(a.id.size(), 64u);
  EXPECT_EQ(a.id, cf::data::record_id(Kind::dialogue, "q", "r"));
}

TEST(Record, FieldSeparatorPreventsConcatenationCollisions) {
  EXPECT_NE(cf::data::record_id(Kind::dialogue, "ab", "c"), cf::data::record_id(Kind::dialogue, "a", "bc"));
}

TEST(Record, CharLenCountsInstructionAndResponse) {
  auto r = cf::data::Record::make(Kind::dialogue, "糖尿病?", "ok");
  EXPECT_EQ(r.char_len, 6u);
}

TEST(Ingest, ThreeValidLines) {
  std::istringstream in(
      "{\"kind\":\"dialogue\",\"instruction\":\"a\",\"response\":\"1\"}\n"
      "{\"kind\":\"dialogue\",\"instruction\":\"b\",\"response\":\"2\"}\n"
      "{\"kind\":\"mcq\",\"instruction\":\"c\",\"response\":\"3\"}\n");
  auto res = cf::data::ingest_jsonl(in);
  EXPECT_EQ(res.corpus.size(), 3u);
  EXPECT_TRUE(res.errors.empty());
}

TEST(Ingest, EmptyStream) {
  std::istringstream in("");
  auto res = cf::data::ingest_jsonl(in);
  EXPECT_TRUE(res.corpus.empty());
  EXPECT_TRUE(res.errors.empty());
}

TEST(Ingest, MalformedLineReportedWithNumber) {
  std::istringstream in(
      "{\"kind\":\"dialogue\",\"instruction\":\"a\",\"response\":\"1\"}\n"
      "{\"kind\":\"dialogue\",\"instruction\":\"b\",\"response\":\"2\"}\n"
      "{not json\n");
  auto res = cf::data::ingest_jsonl(in);
  EXPECT_EQ(res.corpus.size(), 2u);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_EQ(res.errors[0].line, 3u);
}

TEST(Ingest, MissingInstructionRejected) {
  std::istringstream in("{\"kind\":\"dialogue\",\"response\":\"1\"}\n");
  auto res = cf::data::ingest_jsonl(in);
  EXPECT_TRUE(res.corpus.empty());
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_EQ(res.errors[0].line, 1u);
}

TEST(Ingest, SuppliedIdVerified) {
  const std::string good = cf::data::record_id(Kind::dialogue, "a", "1");
  std::istringstream in("{\"id\":\"" + good + "\",\"kind\":\"dialogue\",\"instruction\":\"a\",\"response\":\"1\"}\n" +
                        "{\"id\":\"bogus\",\"kind\":\"dialogue\",\"instruction\":\"b\",\"response\":\"1\"}\n");
  auto res = cf::data::ingest_jsonl(in);
  EXPECT_EQ(res.corpus.size(), 1u);
  EXPECT_EQ(res.errors.size(), 1u);
}

TEST(Ingest, KindHintAppliesWhenAbsent) {
  std::istringstream in("{\"instruction\":\"p\",\"response\":\"\"}\n");
  auto res = cf::data::ingest_jsonl(in, Kind::passage);
  ASSERT_EQ(res.corpus.size(), 1u);
  EXPECT_EQ(res.corpus[0].kind, Kind::passage);
}

TEST(WriteJsonl, EmptyCorpusWritesNothing) {
  std::ostringstream out;
  EXPECT_EQ(cf::data::write_jsonl(cf::data::Corpus{}, out), 0u);
  EXPECT_TRUE(out.str().empty());
}

TEST(WriteJsonl, RoundTripKeepsIdsAndOrder) {
  std::vector<cf::data::Record> recs;
  for (int i = 0; i < 5; ++i) {
    recs.push_back(cf::data::Record::make(Kind::dialogue, "q" + std::to_string(i), "r", "s", "zh", {{"k", "v"}}));
  }
  cf::data::Corpus c(recs);
  std::ostringstream out;
  EXPECT_EQ(cf::data::write_jsonl(c, out), 5u);
  std::istringstream in(out.str());
  auto back = cf::data::ingest_jsonl(in);
  ASSERT_EQ(back.corpus.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(back.corpus[i], c[i]);
}

TEST(WriteJsonl, EmbeddedNewlineStaysOnOneLine) {
  cf::data::Corpus c({cf::data::Record::make(Kind::dialogue, "line1\nline2", "a\r\nb")});
  std::ostringstream out;
  cf::data::write_jsonl(c, out);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  std::istringstream in(out.str());
  auto back = cf::data::ingest_jsonl(in);
  ASSERT_EQ(back.corpus.size(), 1u);
  EXPECT_EQ(back.corpus[0].instruction, "line1\nline2");
  EXPECT_EQ(back.corpus[0].id, c[0].id);
}

TEST(WriteJsonl, SecondWriteIsByteIdentical) {
  std::istringstream raw(
      "{\"response\":\"1\",\"instruction\":\"a\",\"kind\":\"dialogue\",\"meta\":{\"z\":\"1\",\"a\":\"2\"}}\n"
      "{\"instruction\":\"b\",\"kind\":\"fill_blank\",\"response\":\"2\",\"language\":\"zh\"}\n");
  auto first = cf::data::ingest_jsonl(raw).corpus;
  std::ostringstream w1;
  cf::data::write_jsonl(first, w1);
  std::istringstream again(w1.str());
  std::ostringstream w2;
  cf::data::write_jsonl(cf::data::ingest_jsonl(again).corpus, w2);
  EXPECT_EQ(w1.str(), w2.str());
}

TEST(Corpus, RejectsDuplicateIds) {
  auto r = cf::data::Record::make(Kind::dialogue, "q", "r");
  EXPECT_THROW(cf::data::Corpus({r, r}), cf::ValidationError);
}

TEST(Corpus, ShuffledRecordsKeepTheirIds) {
  std::vector<cf::data::Record> recs;
  for (int i = 0; i < 20; ++i) recs.push_back(cf::data::Record::make(Kind::dialogue, std::to_string(i), "r"));
  auto shuffled = recs;
  cf::Rng rng(3);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  for (auto& r : shuffled) {
    const std::string before = r.id;
    r.refresh();
    EXPECT_EQ(r.id, before);
  }
}

TEST(LengthStats, HandArithmetic) {
  auto s = cf::data::length_stats({1, 2, 3});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.sd, 0.816496580927726, 1e-12);
  EXPECT_EQ(s.min, 1u);
  EXPECT_EQ(s.max, 3u);
}

TEST(LengthStats, ConstantLengths) {
  auto s = cf::data::length_stats({7, 7, 7});
  EXPECT_DOUBLE_EQ(s.mean, 7.0);
  EXPECT_DOUBLE_EQ(s.sd, 0.0);
}

TEST(LengthStats, MatchesTwoPassOracle) {
  cf::Rng rng(11);
  std::vector<std::size_t> lens;
  for (int i = 0; i < 100; ++i) lens.push_back(1 + rng.below(1000));
  // Oracle: long-double sums, textbook two-pass variance.
  long double sum = 0;
  for (auto l : lens) sum += l;
  const long double mean = sum / lens.size();
  long double ss = 0;
  for (auto l : lens) ss += (l - mean) * (l - mean);
  const double sd = std::sqrt(static_cast<double>(ss / lens.size()));
  auto s = cf::data::length_stats(lens);
  EXPECT_NEAR(s.mean, static_cast<double>(mean), 1e-9);
  EXPECT_NEAR(s.sd, sd, 1e-9);
  EXPECT_LE(static_cast<double>(s.min), s.mean);
  EXPECT_LE(s.mean, static_cast<double>(s.max));
}

TEST(LengthStats, EmptyCorpusThrows) {
  EXPECT_THROW(cf::data::corpus_length_stats(cf::data::Corpus{}), cf::ValidationError);
}

TEST(McqItem, Validation) {
  auto item = cf::data::mcq_from_json(
      nlohmann::json{{"stem", "s"}, {"options", {{"A", "x"}, {"B", "y"}}}, {"gold", "B"}, {"qtype", "A2"}});
  EXPECT_EQ(item.qtype, cf::data::McqType::A2);
  EXPECT_FALSE(item.id.empty());
  EXPECT_THROW(cf::data::mcq_from_json(nlohmann::json{{"stem", "s"}, {"options", {{"A", "x"}, {"B", "y"}}}, {"gold", "C"}}),
               cf::ValidationError);
  EXPECT_THROW(cf::data::mcq_from_json(nlohmann::json{{"stem", "s"}, {"options", {{"A", "x"}}}, {"gold", "A"}}),
               cf::ValidationError);
}
