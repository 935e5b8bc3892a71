#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "oko/errors.hpp"
#include "oko/numcore.hpp"

using namespace oko;

namespace {

Vec random_logits(RngStream& rng, std::size_t n, double scale) {
  Vec z(n);
  for (double& v : z) v = scale * (2.0 * rng.uniform01() - 1.0);
  return z;
}

Vec random_prob(RngStream& rng, std::size_t n) {
  Vec p(n);
  double s = 0.0;
  for (double& v : p) {
    v = rng.uniform01() + 1e-3;
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

TEST(Softmax, SymmetricPair) {
  const Vec p = softmax(Vec{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, LimitLogitsOfToyMinimizer) {
  const Vec p = softmax(Vec{0.0, -std::log(2.0)});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeEqualLogitsDoNotOverflow) {
  const Vec p = softmax(Vec{1000.0, 1000.0, 1000.0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax(Vec{0.0, std::numeric_limits<double>::quiet_NaN()}), InvalidArgument);
  EXPECT_THROW(softmax(Vec{std::numeric_limits<double>::infinity(), 0.0}), InvalidArgument);
  EXPECT_THROW(log_softmax(Vec{std::numeric_limits<double>::infinity()}), InvalidArgument);
  EXPECT_THROW(softmax(Vec{}), InvalidArgument);
}

TEST(Softmax, ShiftInvariance) {
  RngStream rng(11, 0);
  for (int t = 0; t < 200; ++t) {
    Vec z = random_logits(rng, 7, 20.0);
    const double c = 100.0 * (2.0 * rng.uniform01() - 1.0);
    Vec zc = z;
    for (double& v : zc) v += c;
    const Vec a = softmax(z);
    const Vec b = softmax(zc);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(LogSoftmax, Uniform) {
  const Vec l = log_softmax(Vec{0.0, 0.0});
  EXPECT_NEAR(l[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(l[1], -std::log(2.0), 1e-15);
}

TEST(LogSoftmax, TinyNegativeNotRoundedToZero) {
  const Vec l = log_softmax(Vec{50.0, 0.0});
  const double expected = -std::log1p(std::exp(-50.0));  // ~ -1.9287e-22
  EXPECT_LT(l[0], 0.0);
  EXPECT_NEAR(l[0] / expected, 1.0, 1e-12);
  EXPECT_NEAR(l[1], -50.0 + expected, 1e-12);
}

TEST(LogSoftmax, Normalizes) {
  const Vec l = log_softmax(Vec{0.0, -std::log(2.0), std::log(2.0)});
  double s = 0.0;
  for (double v : l) s += std::exp(v);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(LogSoftmax, ExpMatchesSoftmax) {
  RngStream rng(12, 0);
  for (int t = 0; t < 200; ++t) {
    const Vec z = random_logits(rng, 6, 500.0);
    const Vec l = log_softmax(z);
    const Vec p = softmax(z);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(std::exp(l[i]), p[i], 1e-12);
  }
}

TEST(LogSumExp, MatchesDirectEvaluation) {
  const Vec z{0.3, -1.2, 2.5};
  EXPECT_NEAR(log_sum_exp(z), std::log(std::exp(0.3) + std::exp(-1.2) + std::exp(2.5)), 1e-14);
  EXPECT_NEAR(log_sum_exp(Vec{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Entropy, Examples) {
  EXPECT_NEAR(entropy(Vec(10, 0.1)), std::log(10.0), 1e-12);
  EXPECT_EQ(entropy(Vec{1.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(entropy(Vec{2.0 / 3.0, 1.0 / 3.0}),
              (2.0 / 3.0) * std::log(1.5) + (1.0 / 3.0) * std::log(3.0), 1e-12);
  EXPECT_NEAR(entropy(Vec{2.0 / 3.0, 1.0 / 3.0}), 0.6365, 1e-4);
}

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy(Vec{1.0, 0.0}, Vec{0.5, 0.5}), std::log(2.0), 1e-15);
  const Vec p{2.0 / 3.0, 1.0 / 3.0};
  EXPECT_NEAR(cross_entropy(p, p), entropy(p), 1e-15);
  EXPECT_NEAR(cross_entropy(Vec{1.0, 0.0}, Vec{0.9, 0.1}), 0.10536051565782628, 1e-12);
}

TEST(CrossEntropy, ZeroSupportGivesInfinity) {
  EXPECT_EQ(cross_entropy(Vec{0.5, 0.5}, Vec{1.0, 0.0}), std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isfinite(cross_entropy(Vec{1.0, 0.0}, Vec{1.0, 0.0})));
}

TEST(CrossEntropy, GibbsInequality) {
  RngStream rng(13, 0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.uniform_index(8);
    const Vec p = random_prob(rng, n);
    const Vec q = random_prob(rng, n);
    EXPECT_GE(cross_entropy(p, q) - entropy(p), -1e-12);
  }
}

TEST(Brier, Examples) {
  EXPECT_EQ(brier_score(0, Vec{1.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(brier_score(0, Vec{0.5, 0.5}), 0.25 + 0.25);
  EXPECT_DOUBLE_EQ(brier_score(1, Vec{1.0, 0.0}), 2.0);
  EXPECT_THROW(brier_score(2, Vec{1.0, 0.0}), InvalidArgument);
  EXPECT_THROW(brier_score(-1, Vec{1.0, 0.0}), InvalidArgument);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(Vec{0.2, 0.4, 0.4}), 1);
  EXPECT_EQ(argmax(Vec{1.0}), 0);
}

TEST(RngStream, SameSeedAndStreamReproduce) {
  RngStream a(42, 7);
  RngStream b(42, 7);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, DistinctStreamsDiffer) {
  RngStream a(42, 7);
  RngStream b(42, 8);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += a.next_u64() == b.next_u64();
  EXPECT_EQ(equal, 0);
}

TEST(RngStream, DistinctStreamsAreUncorrelated) {
  RngStream a(1, 100);
  RngStream b(1, 101);
  const int n = 100000;
  double sab = 0.0;
  for (int i = 0; i < n; ++i) sab += (a.uniform01() - 0.5) * (b.uniform01() - 0.5);
  // Var of the product of two centred U(0,1) is 1/144.
  EXPECT_LT(std::abs(sab / n), 5.0 * std::sqrt(1.0 / 144.0 / n));
}

TEST(RngStream, UniformIndexIsUnbiased) {
  RngStream rng(5, 0);
  const std::size_t k = 7;
  std::vector<int> counts(k, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(k)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / k, 0.01);
  EXPECT_THROW(rng.uniform_index(0), InvalidArgument);
}

TEST(RngStream, NormalMoments) {
  RngStream rng(6, 0);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(RngStream, UniformRange) {
  RngStream rng(8, 3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RngStream, DeriveIsIndependentOfConsumption) {
  RngStream a(9, 1);
  RngStream b(9, 1);
  for (int i = 0; i < 50; ++i) b.next_u64();
  RngStream ca = a.derive(3);
  RngStream cb = b.derive(3);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(ca.next_u64(), cb.next_u64());
  RngStream other = a.derive(4);
  RngStream again = a.derive(3);
  EXPECT_NE(other.next_u64(), again.next_u64());
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(std::string("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64(std::string("foobar")), 0x85944171f73967e8ULL);
}
