#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "oko/errors.hpp"
#include "oko/losses.hpp"
#include "test_util.hpp"

using namespace oko;
using oko::testing::numeric_grad;
using oko::testing::rel_error;

namespace {

Vec random_logits(RngStream& rng, std::size_t n, double scale = 3.0) {
  Vec z(n);
  for (double& v : z) v = scale * rng.normal();
  return z;
}

using LossFn = std::function<LossGrad(const Vec&)>;

void expect_fd_match(const LossFn& fn, const Vec& z, double tol = 1e-4) {
  const LossGrad lg = fn(z);
  const Vec fd = numeric_grad([&](const Vec& v) { return fn(v).loss; }, z);
  EXPECT_LT(rel_error(lg.grad, fd), tol);
}

}  // namespace

TEST(VanillaCe, ZeroLogits) {
  const Vec z(10, 0.0);
  for (int y = 0; y < 10; ++y) EXPECT_NEAR(vanilla_ce(z, y).loss, std::log(10.0), 1e-14);
}

TEST(VanillaCe, GradientIsSoftmaxMinusOneHot) {
  const Vec z{5.0, 0.0};
  const auto lg = vanilla_ce(z, 0);
  const Vec p = softmax(z);
  EXPECT_NEAR(lg.grad[0], p[0] - 1.0, 1e-15);
  EXPECT_NEAR(lg.grad[1], p[1], 1e-15);
  EXPECT_NEAR(lg.grad[0] + lg.grad[1], 0.0, 1e-15);
}

TEST(VanillaCe, DivergenceDirection) {
  RngStream rng(20, 0);
  for (int t = 0; t < 200; ++t) {
    const Vec z = random_logits(rng, 5, 10.0);
    const int y = static_cast<int>(rng.uniform_index(5));
    const auto g = vanilla_ce(z, y).grad;
    for (int j = 0; j < 5; ++j) {
      if (j == y) EXPECT_LT(g[j], 0.0);
      else EXPECT_GT(g[j], 0.0);
    }
  }
}

TEST(VanillaCe, RejectsBadLabel) {
  EXPECT_THROW(vanilla_ce(Vec{0.0, 0.0}, 2), InvalidArgument);
}

TEST(WeightedCe, UniformCountsScaleVanilla) {
  const Vec z{0.3, -1.0, 2.0};
  const Vec counts{4.0, 4.0, 4.0};
  const double a = 12.0 / 3.0;
  EXPECT_NEAR(weighted_ce(z, 1, counts, a).loss, vanilla_ce(z, 1).loss * a / 4.0, 1e-14);
  EXPECT_NEAR(weighted_ce(z, 1, counts, 6.0).loss, vanilla_ce(z, 1).loss * 1.5, 1e-14);
}

TEST(WeightedCe, HalfCountDoublesLoss) {
  const Vec z(2, 0.0);
  const Vec counts{10.0, 5.0};
  EXPECT_NEAR(weighted_ce(z, 1, counts, 7.5).loss, 2.0 * weighted_ce(z, 0, counts, 7.5).loss, 1e-14);
}

TEST(WeightedCe, RejectsZeroCount) {
  EXPECT_THROW(weighted_ce(Vec{0.0, 0.0}, 0, Vec{0.0, 1.0}, 1.0), InvalidArgument);
  LossSpec spec{LossKind::kWeighted};
  spec.class_counts = {1.0, 0.0};
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(SmoothedCe, Examples) {
  RngStream rng(21, 0);
  const Vec z = random_logits(rng, 4);
  EXPECT_NEAR(smoothed_ce(z, 2, 0.0).loss, vanilla_ce(z, 2).loss, 1e-14);
  EXPECT_NEAR(smoothed_ce(Vec(10, 0.0), 3, 0.1).loss, std::log(10.0), 1e-14);
  EXPECT_THROW(smoothed_ce(z, 0, 1.0), InvalidArgument);
  // Direct evaluation of H(t, softmax z).
  const Vec p = softmax(z);
  double h = 0.0;
  for (int i = 0; i < 4; ++i) h -= ((i == 2 ? 0.9 : 0.0) + 0.1 / 4) * std::log(p[i]);
  EXPECT_NEAR(smoothed_ce(z, 2, 0.1).loss, h, 1e-12);
}

TEST(Focal, Examples) {
  RngStream rng(22, 0);
  const Vec z = random_logits(rng, 5);
  EXPECT_NEAR(focal(z, 1, 0.0).loss, vanilla_ce(z, 1).loss, 1e-14);
  EXPECT_NEAR(focal(Vec{800.0, 0.0}, 0, 2.0).loss, 0.0, 1e-300);
  const Vec p = softmax(z);
  EXPECT_NEAR(focal(z, 1, 2.0).loss, -std::pow(1 - p[1], 2.0) * std::log(p[1]), 1e-12);
  EXPECT_THROW(focal(z, 1, -1.0), InvalidArgument);
}

TEST(SetLogitSum, Basics) {
  const std::vector<Vec> a{{1.0, 0.0}, {0.0, 0.0}};
  EXPECT_EQ(set_logit_sum(a), (Vec{1.0, 0.0}));
  const std::vector<Vec> b{{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_EQ(set_logit_sum(a), set_logit_sum(b));
  const Vec z{0.25, -1.5, 2.0};
  const std::vector<Vec> copies(3, z);
  const Vec s = set_logit_sum(copies);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s[i], 3 * z[i]);
  EXPECT_THROW(set_logit_sum(std::vector<Vec>{}), InvalidArgument);
  EXPECT_THROW(set_logit_sum(std::vector<Vec>{{1.0}, {1.0, 2.0}}), InvalidArgument);
}

TEST(OkoHard, ZeroLogitsAndToyLimit) {
  EXPECT_NEAR(oko_hard(Vec(7, 0.0), 3).loss, std::log(7.0), 1e-14);
  // Limit logits of the three-point toy problem: f(1) = [0, -log 2] predicts [2/3, 1/3] on its
  // own; a set of three f(0) = [0, 0] members sums to zero logits and predicts [1/2, 1/2].
  const Vec f1{0.0, -std::log(2.0)};
  const Vec p = softmax(f1);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  const Vec f0{0.0, 0.0};
  const std::vector<Vec> set{f0, f0, f0};
  const Vec s = set_logit_sum(set);
  EXPECT_NEAR(oko_hard(s, 0).loss, std::log(2.0), 1e-15);
}

TEST(OkoSoft, Examples) {
  const std::vector<int> ys{0, 0, 1};
  EXPECT_NEAR(oko_soft(Vec(2, 0.0), ys).loss, std::log(2.0), 1e-14);
  RngStream rng(23, 0);
  const Vec z = random_logits(rng, 4);
  const std::vector<int> same{2, 2, 2};
  EXPECT_NEAR(oko_soft(z, same).loss, oko_hard(z, 2).loss, 1e-14);
}

TEST(OkoSoft, GibbsLowerBound) {
  RngStream rng(24, 0);
  for (int t = 0; t < 200; ++t) {
    const Vec z = random_logits(rng, 4);
    std::vector<int> ys{0, 0, 1, 3};
    Vec target{0.5, 0.25, 0.0, 0.25};
    EXPECT_GE(oko_soft(z, ys).loss, entropy(target) - 1e-12);
  }
  Vec logt{std::log(0.5), std::log(0.25), std::log(0.25)};
  EXPECT_NEAR(oko_soft(logt, std::vector<int>{0, 0, 1, 2}).loss, entropy(Vec{0.5, 0.25, 0.25}), 1e-14);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  RngStream rng(25, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t C = 2 + rng.uniform_index(6);
    const Vec z = random_logits(rng, C);
    const int y = static_cast<int>(rng.uniform_index(C));
    Vec counts(C);
    for (double& c : counts) c = 1.0 + static_cast<double>(rng.uniform_index(50));
    std::vector<int> ys{y, y};
    for (std::size_t i = 0; i + 1 < C && i < 2; ++i) ys.push_back(static_cast<int>((y + 1 + i) % C));
    expect_fd_match([&](const Vec& v) { return vanilla_ce(v, y); }, z);
    expect_fd_match([&](const Vec& v) { return weighted_ce(v, y, counts, 10.0); }, z);
    expect_fd_match([&](const Vec& v) { return smoothed_ce(v, y, 0.1); }, z);
    expect_fd_match([&](const Vec& v) { return focal(v, y, 2.0); }, z);
    expect_fd_match([&](const Vec& v) { return focal(v, y, 0.5); }, z);
    expect_fd_match([&](const Vec& v) { return oko_hard(v, y); }, z);
    expect_fd_match([&](const Vec& v) { return oko_soft(v, ys); }, z);
  }
}

TEST(Losses, ShiftInvariance) {
  RngStream rng(26, 0);
  for (int t = 0; t < 50; ++t) {
    const Vec z = random_logits(rng, 4);
    Vec zc = z;
    for (double& v : zc) v += 37.5;
    const std::vector<int> ys{1, 1, 2};
    const Vec counts{3.0, 5.0, 7.0, 9.0};
    EXPECT_NEAR(vanilla_ce(z, 1).loss, vanilla_ce(zc, 1).loss, 1e-12);
    EXPECT_NEAR(weighted_ce(z, 1, counts, 6).loss, weighted_ce(zc, 1, counts, 6).loss, 1e-12);
    EXPECT_NEAR(smoothed_ce(z, 1, 0.1).loss, smoothed_ce(zc, 1, 0.1).loss, 1e-12);
    EXPECT_NEAR(focal(z, 1, 2).loss, focal(zc, 1, 2).loss, 1e-12);
    EXPECT_NEAR(oko_soft(z, ys).loss, oko_soft(zc, ys).loss, 1e-12);
  }
}

TEST(LossSpec, NamesAndDispatch) {
  for (auto k : {LossKind::kVanilla, LossKind::kWeighted, LossKind::kLabelSmoothing,
                 LossKind::kFocal, LossKind::kOkoHard, LossKind::kOkoSoft}) {
    EXPECT_EQ(loss_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(loss_kind_from_string("hinge"), InvalidArgument);
  LossSpec w{LossKind::kWeighted};
  w.class_counts = {2.0, 6.0};
  // Default scale n / C = 4.
  EXPECT_NEAR(evaluate_example_loss(w, Vec{0.0, 0.0}, 0).loss, 2.0 * std::log(2.0), 1e-14);
  EXPECT_THROW(evaluate_example_loss(LossSpec{LossKind::kOkoHard}, Vec{0.0, 0.0}, 0), InvalidArgument);
}
