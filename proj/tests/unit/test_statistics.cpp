#include <gtest/gtest.h>

#include <cmath>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/statistics.hpp"
#include "oracles.hpp"

namespace cf = corpusforge;
namespace st = corpusforge::stats;

namespace {

std::vector<std::vector<double>> transpose(const std::vector<std::vector<double>>& g) {
  std::vector<std::vector<double>> t(g[0].size(), std::vector<double>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g[0].size(); ++j) t[j][i] = g[i][j];
  }
  return t;
}

}  // namespace

TEST(Ranks, TiesShareMeanRank) {
  const std::vector<double> v{3, 1, 3, 2};
  EXPECT_EQ(st::average_ranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Wilcoxon, AllPositiveFive) {
  const std::vector<double> d{1, 2, 3, 4, 5};
  const auto r = st::wilcoxon_signed_rank(d);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.w_plus, 15.0);
  EXPECT_NEAR(r.p_two_sided, 0.0625, 1e-12);
  EXPECT_EQ(r.method, st::WilcoxonMethod::exact);
}

TEST(Wilcoxon, PublishedExample) {
  // Paired differences from a classic textbook data set; exact two-sided
  // p is 1352 / 32768.
  const std::vector<double> d{6, 8, 14, 16, 23, 24, 28, 29, 41, -48, 49, 56, 60, -67, 75};
  const auto r = st::wilcoxon_signed_rank(d);
  EXPECT_EQ(r.statistic, 24.0);
  EXPECT_NEAR(r.p_two_sided, 0.041259765625, 1e-12);
}

TEST(Wilcoxon, DegenerateAndSymmetric) {
  const std::vector<double> zeros{0, 0, 0};
  const auto z = st::wilcoxon_signed_rank(zeros);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.p_two_sided, 1.0);
  const std::vector<double> sym{1, -1};
  EXPECT_NEAR(st::wilcoxon_signed_rank(sym).p_two_sided, 1.0, 1e-12);
}

TEST(Wilcoxon, PairsAndZeroHandling) {
  const std::vector<double> x{5, 6, 7, 8, 9, 9};
  const std::vector<double> y{4, 4, 4, 4, 4, 9};
  const auto r = st::wilcoxon_signed_rank(x, y);
  EXPECT_EQ(r.n_input, 6u);
  EXPECT_EQ(r.n_effective, 5u);
  st::WilcoxonOptions pratt{.zero_method = st::ZeroMethod::pratt, .method = st::WilcoxonMethod::normal, .exact_max_n = 25};
  const auto p = st::wilcoxon_signed_rank(x, y, pratt);
  EXPECT_EQ(p.zero_method, st::ZeroMethod::pratt);
  EXPECT_TRUE(p.z);
  const std::vector<double> short_y{1};
  EXPECT_THROW(st::wilcoxon_signed_rank(x, short_y), cf::ValidationError);
}

TEST(Wilcoxon, ExactMatchesEnumeration) {
  cf::Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> d(n);
    // Small integer grid so ties and zeros occur.
    for (double& v : d) v = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    st::WilcoxonOptions o{.zero_method = st::ZeroMethod::wilcox, .method = st::WilcoxonMethod::exact, .exact_max_n = 25};
    const auto r = st::wilcoxon_signed_rank(d, o);
    EXPECT_NEAR(r.p_two_sided, oracle::wilcoxon_enumeration_p(d), 1e-12) << "trial " << trial;
  }
}

TEST(Wilcoxon, NormalApproximatesExactAtTwenty) {
  cf::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> d(20);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (rng.uniform() < 0.6 ? 1.0 : -1.0) * (static_cast<double>(i) + 1 + rng.uniform() * 0.5);
    st::WilcoxonOptions ex{.zero_method = st::ZeroMethod::wilcox, .method = st::WilcoxonMethod::exact, .exact_max_n = 25};
    st::WilcoxonOptions nm{.zero_method = st::ZeroMethod::wilcox, .method = st::WilcoxonMethod::normal, .exact_max_n = 25};
    EXPECT_NEAR(st::wilcoxon_signed_rank(d, ex).p_two_sided, st::wilcoxon_signed_rank(d, nm).p_two_sided, 0.01);
  }
}

TEST(Wilcoxon, AutomaticSwitchesAboveLimit) {
  std::vector<double> d(30);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i + 1) * (i % 3 ? 1 : -1);
  EXPECT_EQ(st::wilcoxon_signed_rank(d).method, st::WilcoxonMethod::normal);
}

TEST(Icc, PerfectAgreement) {
  const std::vector<std::vector<double>> g{{1, 2, 3, 4}, {1, 2, 3, 4}, {1, 2, 3, 4}};
  EXPECT_NEAR(st::icc_two_way(g).icc, 1.0, 1e-9);
}

TEST(Icc, PublishedSixByFour) {
  // Six targets rated by four judges; ICC(2,1) is 0.29 in the classic table.
  const std::vector<std::vector<double>> targets{{9, 2, 5, 8}, {6, 1, 3, 2}, {8, 4, 6, 8},
                                                 {7, 1, 2, 6}, {10, 5, 6, 9}, {6, 2, 4, 7}};
  const auto g = transpose(targets);
  const auto r = st::icc_two_way(g);
  EXPECT_NEAR(r.icc, 0.2898, 5e-4);
  EXPECT_NEAR(r.icc, oracle::icc21(g), 1e-9);
  EXPECT_EQ(r.readers, 4u);
  EXPECT_EQ(r.cases, 6u);
}

TEST(Icc, RandomGridsMatchOracleAndReaderPermutation) {
  cf::Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t readers = 2 + rng.below(4), cases = 2 + rng.below(8);
    std::vector<std::vector<double>> g(readers, std::vector<double>(cases));
    for (std::size_t c = 0; c < cases; ++c) {
      const double truth = static_cast<double>(rng.below(5));
      for (std::size_t r = 0; r < readers; ++r) g[r][c] = truth + static_cast<double>(rng.below(3));
    }
    double icc = 0;
    try {
      icc = st::icc_two_way(g).icc;
    } catch (const cf::ValidationError&) {
      continue;
    }
    EXPECT_NEAR(icc, std::clamp(oracle::icc21(g), -1.0, 1.0), 1e-9);
    std::reverse(g.begin(), g.end());
    EXPECT_NEAR(st::icc_two_way(g).icc, icc, 1e-9);
  }
}

TEST(Icc, AntiCorrelatedIsNegative) {
  const std::vector<std::vector<double>> g{{1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}};
  EXPECT_LT(st::icc_two_way(g).icc, 0.0);
}

TEST(Icc, InvalidGrids) {
  EXPECT_THROW(st::icc_two_way({{1, 2}}), cf::ValidationError);
  EXPECT_THROW(st::icc_two_way({{1, 2, 3}, {1, 2}}), cf::ValidationError);
  EXPECT_THROW(st::icc_two_way({{3, 3}, {3, 3}}), cf::ValidationError);
  EXPECT_THROW(st::icc_two_way({{1, NAN}, {1, 2}}), cf::ValidationError);
}

TEST(MeanSem, Values) {
  const std::vector<double> a{1, 2, 3};
  const auto m = st::mean_sem(a);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.sem, 1.0 / std::sqrt(3.0), 1e-12);
  const std::vector<double> b{5, 5, 5};
  EXPECT_EQ(st::mean_sem(b).sem, 0.0);
  const std::vector<double> one{4};
  EXPECT_EQ(st::mean_sem(one).sd, 0.0);
  EXPECT_THROW(st::mean_sem(std::span<const double>{}), cf::ValidationError);
}
