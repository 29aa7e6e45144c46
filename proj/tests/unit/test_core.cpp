#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dwf/core/grad_check.hpp"
#include "dwf/core/matrix.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/core/stats.hpp"

using namespace dwf;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.normal(0.0, 1.0);
  return m;
}

DenseMatrix triple_loop(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(DenseMatrix::identity(2), a), a);
}

TEST(Matmul, SmallProduct) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  const auto b = DenseMatrix::from_rows({{0}, {1}});
  EXPECT_EQ(matmul(a, b), DenseMatrix::from_rows({{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoopBitForBit) {
  SeededRng rng(11);
  for (auto [m, k, n] : {std::tuple{5, 7, 3}, std::tuple{9, 13, 6}, std::tuple{1, 4, 2}}) {
    auto a = random_matrix(m, k, rng);
    const auto b = random_matrix(k, n, rng);
    a(0, 1) = 0.0;  // exercise the zero skip
    const auto ref = triple_loop(a, b);
    const auto got = matmul(a, b);
    EXPECT_LE(max_abs_diff(got.values(), ref.values()), 1e-12);
    EXPECT_EQ(got, ref);
  }
}

TEST(Matmul, TransposedVariantsMatchExplicitTranspose) {
  SeededRng rng(12);
  const auto a = random_matrix(6, 4, rng);
  const auto b = random_matrix(6, 5, rng);
  EXPECT_EQ(matmul_tn(a, b), triple_loop(transpose(a), b));
  const auto c = random_matrix(3, 4, rng);
  EXPECT_EQ(matmul_nt(c, a), triple_loop(c, transpose(a)));
}

TEST(Matmul, DimensionMismatchIsShapeError) {
  try {
    matmul(DenseMatrix(2, 3), DenseMatrix(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
}

TEST(Matmul, AssociativeOnRandomTriples) {
  SeededRng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_matrix(4, 6, rng);
    const auto b = random_matrix(6, 5, rng);
    const auto c = random_matrix(5, 3, rng);
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    double scale = 0.0;
    for (double v : left.values()) scale = std::max(scale, std::abs(v));
    EXPECT_LE(max_abs_diff(left.values(), right.values()), 1e-10 * std::max(1.0, scale));
  }
}

TEST(Matrix, ColumnSumsAndShapeValidation) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(column_sums(a), DenseMatrix::from_rows({{9, 12}}));
  EXPECT_THROW(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), Error);
}

TEST(Rng, SameSeedSameStream) {
  SeededRng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  SeededRng c(42), d(42);
  EXPECT_EQ(sample_normal(c, 100, 0.0, 1.0), sample_normal(d, 100, 0.0, 1.0));
}

TEST(Rng, ChildStreamsAreIndependentOfParentState) {
  SeededRng a(5);
  const auto before = a.child({1, 2}).next_u64();
  a.next_u64();
  EXPECT_EQ(a.child({1, 2}).next_u64(), before);
  EXPECT_NE(a.child({1, 3}).next_u64(), before);
}

TEST(Rng, FirstEngineOutputIsTheStandardValue) {
  // The C++ standard fixes the 10000th output of default-seeded mt19937_64.
  std::mt19937_64 e;
  e.discard(9999);
  EXPECT_EQ(e(), 9981545732273789042ULL);
}

TEST(SampleNormal, ZeroSigmaGivesMu) {
  SeededRng rng(1);
  for (double v : sample_normal(rng, 50, 2.5, 0.0)) EXPECT_EQ(v, 2.5);
}

TEST(SampleNormal, NegativeSigmaIsRejected) {
  SeededRng rng(1);
  EXPECT_THROW(sample_normal(rng, 5, 0.0, -1.0), Error);
}

TEST(SampleNormal, MomentsWithinCltTolerance) {
  SeededRng rng(2024);
  const auto x = sample_normal(rng, 100000, 0.0, 1.0);
  const auto m = stats::moments(x);
  EXPECT_LT(std::abs(m.mean), 0.02);
  EXPECT_GE(m.variance, 0.97);
  EXPECT_LE(m.variance, 1.03);
}

TEST(SampleNormal, PassesKolmogorovSmirnov) {
  // Seed 7 is fixed; the test asserts non-rejection at alpha = 0.01.
  SeededRng rng(7);
  const auto ks = stats::ks_test_normal(sample_normal(rng, 10000, 0.0, 1.0), 0.0, 1.0);
  EXPECT_GT(ks.p_value, 0.01);
}

TEST(Gamma, MeanAndVarianceMatchShape) {
  SeededRng rng(3);
  for (double shape : {0.25, 1.0 / 3.0, 0.5, 2.0}) {
    std::vector<double> x(200000);
    for (double& v : x) v = rng.gamma(shape);
    const auto m = stats::moments(x);
    EXPECT_NEAR(m.mean, shape, 0.02 * std::max(1.0, shape)) << shape;
    EXPECT_NEAR(m.variance, shape, 0.05 * std::max(1.0, shape)) << shape;
  }
}

TEST(Shuffle, IsAPermutation) {
  SeededRng rng(4);
  auto p = random_permutation(100, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(GradCheck, QuadraticIsExact) {
  auto f = [](std::span<const double> x) {
    return std::pair{x[0] * x[0], std::vector<double>{2.0 * x[0]}};
  };
  const std::vector<double> x{3.0};
  EXPECT_LE(grad_check(f, x, 1e-5), 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  auto f = [](std::span<const double> x) {
    return std::pair{4.0, std::vector<double>(x.size(), 0.0)};
  };
  const std::vector<double> x{1.0, -2.0};
  EXPECT_EQ(grad_check(f, x, 1e-5), 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  auto f = [](std::span<const double> x) {
    return std::pair{x[0] * x[0], std::vector<double>{x[0]}};
  };
  const std::vector<double> x{3.0};
  EXPECT_GT(grad_check(f, x, 1e-5), 0.4);
}

TEST(GradCheck, NonFiniteValueIsNumericError) {
  auto f = [](std::span<const double>) {
    return std::pair{std::nan(""), std::vector<double>{0.0}};
  };
  const std::vector<double> x{1.0};
  try {
    grad_check(f, x, 1e-5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
  }
}

TEST(Stats, SpearmanOfMonotoneSequenceIsOne) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 20, 20, 40, 100};
  EXPECT_GT(stats::spearman(a, b), 0.97);
  const std::vector<double> c{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(stats::spearman(a, c), -1.0);
}
