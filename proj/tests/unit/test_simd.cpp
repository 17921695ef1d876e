#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/simd/kernels.hpp"

namespace cf = corpusforge;
namespace simd = corpusforge::simd;

namespace {

std::vector<double> random_vec(cf::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

std::vector<simd::Isa> vector_isas() {
  std::vector<simd::Isa> out;
  for (auto isa : {simd::Isa::avx2, simd::Isa::neon}) {
    if (simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

}  // namespace

TEST(Simd, ScalarAlwaysAvailable) {
  EXPECT_TRUE(simd::isa_available(simd::Isa::scalar));
  EXPECT_EQ(simd::isa_name(simd::Isa::scalar), "scalar");
}

TEST(Simd, ScalarKernelsMatchHandValues) {
  const auto& t = simd::table(simd::Isa::scalar);
  const double a[] = {1, 2, 3};
  const double b[] = {4, -5, 6};
  EXPECT_DOUBLE_EQ(t.dot(a, b, 3), 12.0);
  EXPECT_DOUBLE_EQ(t.squared_distance(a, b, 3), 9 + 49 + 9);
  double y[] = {1, 1, 1};
  t.axpy(2.0, a, y, 3);
  EXPECT_DOUBLE_EQ(y[2], 7.0);
}

// Every vector ISA present on this machine agrees with the scalar reference
// over lengths that exercise the unrolled body and the remainder tail.
TEST(Simd, VectorVariantsMatchScalar) {
  const auto isas = vector_isas();
  if (isas.empty()) GTEST_SKIP() << "no vector ISA on this CPU";
  const auto& ref = simd::table(simd::Isa::scalar);
  cf::Rng rng(5);
  for (auto isa : isas) {
    const auto& t = simd::table(isa);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 64u, 100u, 1023u}) {
      auto a = random_vec(rng, n), b = random_vec(rng, n);
      const double tol = 1e-12 * static_cast<double>(n + 1);
      EXPECT_NEAR(t.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), tol) << simd::isa_name(isa) << n;
      EXPECT_NEAR(t.squared_distance(a.data(), b.data(), n), ref.squared_distance(a.data(), b.data(), n), tol);
      auto y1 = random_vec(rng, n);
      auto y2 = y1;
      t.axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15);

      const std::size_t rows = 5;
      auto mat = random_vec(rng, rows * n);
      std::vector<double> o1(rows), o2(rows);
      t.dot_rows(a.data(), mat.data(), rows, n, o1.data());
      ref.dot_rows(a.data(), mat.data(), rows, n, o2.data());
      for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(o1[r], o2[r], tol);
    }
  }
}

TEST(Simd, SetIsaSwitchesActiveTable) {
  const auto before = simd::active_isa();
  simd::set_isa(simd::Isa::scalar);
  EXPECT_EQ(simd::active_isa(), simd::Isa::scalar);
  EXPECT_EQ(&simd::active(), &simd::table(simd::Isa::scalar));
  simd::set_isa(before);
}

TEST(Simd, UnavailableIsaRejected) {
  for (auto isa : {simd::Isa::avx2, simd::Isa::neon}) {
    if (!simd::isa_available(isa)) EXPECT_THROW(simd::set_isa(isa), cf::Error);
  }
}

TEST(Simd, SpanWrappersCheckSizes) {
  std::vector<double> a(3), b(4);
  EXPECT_THROW(simd::dot(a, b), cf::ValidationError);
  std::vector<double> rows(7), out(2);
  EXPECT_THROW(simd::dot_rows(a, rows, 3, out), cf::ValidationError);
}
