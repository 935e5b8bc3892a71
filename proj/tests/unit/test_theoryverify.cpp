#include <gtest/gtest.h>

#include <cmath>

#include "oko/errors.hpp"
#include "oko/theoryverify.hpp"
#include "test_util.hpp"

using namespace oko;

namespace {

FMatrix random_f(RngStream& rng, int C) {
  FMatrix F(C, Vec(C));
  for (auto& row : F)
    for (double& v : row) v = rng.normal();
  return F;
}

Vec flatten(const FMatrix& F) {
  Vec out;
  for (const auto& r : F) out.insert(out.end(), r.begin(), r.end());
  return out;
}

FMatrix unflatten(std::span<const double> x, int C) {
  FMatrix F(C, Vec(C));
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) F[i][j] = x[i * C + j];
  return F;
}

const CheckResult& find(const std::vector<CheckResult>& rs, const std::string& name) {
  for (const auto& r : rs)
    if (r.name == name) return r;
  throw std::runtime_error("missing check " + name);
}

}  // namespace

TEST(QEpsilon, MassesSumToOne) {
  for (double e : {0.001, 0.1, 0.5, 0.9}) {
    const auto q = build_q_epsilon(e);
    double total = 0.0;
    for (const auto& r : q.rows()) total += r.mass;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(QEpsilon, RejectsEpsOutsideOpenInterval) {
  for (double e : {0.0, 1.0, -0.2, 1.5, std::nan("")}) EXPECT_THROW(build_q_epsilon(e), InvalidArgument);
}

TEST(QEpsilon, ValueAtOriginIsLogTwo) {
  for (double e : {0.01, 0.3, 0.8}) {
    const auto q = build_q_epsilon(e);
    EXPECT_NEAR(q.value({0, 0, 0}), std::log(2.0), 1e-15);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(q.term(i, {0, 0, 0}), 0.5);
  }
}

TEST(QEpsilon, FirstRowMassAtHalf) {
  EXPECT_DOUBLE_EQ(build_q_epsilon(0.5).rows()[0].mass, 0.0625);
}

TEST(QEpsilon, TermsStayInOpenUnitInterval) {
  RngStream rng(3, 0);
  const auto q = build_q_epsilon(0.2);
  for (int d = 0; d < 100; ++d) {
    const Logits3 a{3 * rng.normal(), 3 * rng.normal(), 3 * rng.normal()};
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_GT(q.term(i, a), 0.0);
      EXPECT_LT(q.term(i, a), 1.0);
    }
  }
}

TEST(QEpsilon, GradientMatchesFiniteDifferences) {
  RngStream rng(4, 0);
  for (double e : {0.001, 0.1, 0.6}) {
    const auto q = build_q_epsilon(e);
    for (int d = 0; d < 20; ++d) {
      Vec x{rng.normal(), rng.normal(), rng.normal()};
      const auto g = q.gradient({x[0], x[1], x[2]});
      const Vec num = oko::testing::numeric_grad([&](std::span<const double> v) { return q.value({v[0], v[1], v[2]}); }, x);
      EXPECT_LT(oko::testing::rel_error(Vec(g.begin(), g.end()), num), 1e-7);
    }
  }
}

TEST(QEpsilon, TableAgreesWithSamplerEnumeration) {
  RngStream rng(5, 0);
  for (double e : {0.001, 0.1, 0.5}) {
    const auto q = build_q_epsilon(e);
    for (int p = 0; p < 5; ++p) {
      const Logits3 a{2 * rng.normal(), 2 * rng.normal(), 2 * rng.normal()};
      EXPECT_NEAR(q.value(a), q_epsilon_by_enumeration(e, a), 1e-12);
    }
  }
}

TEST(QEpsilon, BrokenLossIsDetectedByTheOracle) {
  const SetLoss broken = [](std::span<const double> z, int y) {
    auto lg = oko_hard(z, y);
    lg.loss *= 1.001;
    return lg;
  };
  const Logits3 a{0.3, -0.2, 0.9};
  EXPECT_GT(std::abs(build_q_epsilon(0.1).value(a) - q_epsilon_by_enumeration(0.1, a, broken)), 1e-6);
}

TEST(QEpsilon, MinimizerApproachesLimits) {
  double prev = INFINITY;
  for (double e : {0.1, 0.01, 0.001}) {
    const auto m = minimize_q_epsilon(build_q_epsilon(e));
    EXPECT_LE(m.grad_norm, 1e-10);
    const double dev = limit_deviation(m.a);
    EXPECT_LE(dev, prev);
    prev = dev;
  }
  const auto m = minimize_q_epsilon(build_q_epsilon(0.001));
  EXPECT_LE(limit_deviation(m.a), 0.01);
  EXPECT_NEAR(m.a[0], 0.0, 1e-6);
  EXPECT_NEAR(m.a[1], -std::log(2.0), 1e-2);
  EXPECT_NEAR(m.a[2], std::log(2.0), 1e-2);
  const auto p = toy_predictions(m.a);
  EXPECT_NEAR(p[1][0], 2.0 / 3, 0.01);
  EXPECT_NEAR(p[2][1], 2.0 / 3, 0.01);
}

TEST(QEpsilon, MinimizerIsStationaryAndBeatsNeighbours) {
  const auto q = build_q_epsilon(0.05);
  const auto m = minimize_q_epsilon(q);
  RngStream rng(6, 0);
  for (int d = 0; d < 50; ++d) {
    Logits3 b = m.a;
    for (double& v : b) v += 1e-3 * rng.normal();
    EXPECT_GE(q.value(b), m.value - 1e-15);
  }
}

TEST(QEpsilon, BudgetExhaustionReportsTrace) {
  try {
    minimize_q_epsilon(build_q_epsilon(0.001), 1e-10, 1500);
    FAIL() << "expected ConvergenceFailure";
  } catch (const ConvergenceFailure& e) {
    EXPECT_NE(e.trace.find("iter 1000"), std::string::npos);
  }
  EXPECT_THROW(minimize_q_epsilon(build_q_epsilon(0.1), 0.0), InvalidArgument);
}

TEST(OkoRisk, ZeroMatrixValues) {
  // C = 4, k = 1: 4 pair classes times 3 odd choices, each -log(1/4).
  const FMatrix Z = symmetric_f(4, 0.0, 0.0);
  EXPECT_NEAR(r_hard(Z, 1), 12 * std::log(4.0), 1e-12);
  EXPECT_NEAR(r_soft(Z, 1), 12 * 3 * std::log(4.0), 1e-12);
  // k = 2: C(3, 2) = 3 odd subsets per pair class.
  EXPECT_NEAR(r_hard(Z, 2), 12 * std::log(4.0), 1e-12);
}

TEST(OkoRisk, GradientsMatchFiniteDifferences) {
  RngStream rng(7, 0);
  for (int C : {3, 4}) {
    for (int k : {0, 1, 2}) {
      if (k > C - 1) continue;
      for (int d = 0; d < 5; ++d) {
        const FMatrix F = random_f(rng, C);
        const Vec x = flatten(F);
        const Vec nh = oko::testing::numeric_grad([&](std::span<const double> v) { return r_hard(unflatten(v, C), k); }, x);
        const Vec ns = oko::testing::numeric_grad([&](std::span<const double> v) { return r_soft(unflatten(v, C), k); }, x);
        EXPECT_LT(oko::testing::rel_error(flatten(r_hard_grad(F, k)), nh), 1e-7);
        EXPECT_LT(oko::testing::rel_error(flatten(r_soft_grad(F, k)), ns), 1e-7);
      }
    }
  }
}

TEST(OkoRisk, RejectsBadShapes) {
  EXPECT_THROW(r_hard(FMatrix{{1.0}}, 0), InvalidArgument);
  EXPECT_THROW(r_hard(FMatrix{{1.0, 2.0}, {1.0}}, 0), InvalidArgument);
  EXPECT_THROW(r_hard(symmetric_f(3, 0, 0), 3), InvalidArgument);
}

TEST(CoordinateConvexity, DiagonalAndOffDiagonalBothPass) {
  RngStream rng(8, 0);
  const FMatrix F = random_f(rng, 3);
  for (auto [i, j] : {std::pair{0, 0}, std::pair{1, 1}, std::pair{0, 2}, std::pair{2, 1}}) {
    const auto rep = check_coordinate_convexity(F, 1, i, j);
    EXPECT_TRUE(rep.soft.pass) << i << "," << j;
    EXPECT_TRUE(rep.hard.pass) << i << "," << j;
    EXPECT_EQ(rep.hard.grid_points, 401u);
    EXPECT_LT(rep.hard.derivative_lo, 0.0);
    EXPECT_GT(rep.hard.derivative_hi, 0.0);
  }
}

TEST(CoordinateConvexity, HundredRandomSweeps) {
  RngStream rng(9, 0);
  for (int d = 0; d < 100; ++d) {
    const FMatrix F = random_f(rng, 3);
    const int i = static_cast<int>(rng.uniform_index(3));
    const int j = static_cast<int>(rng.uniform_index(3));
    const auto rep = check_coordinate_convexity(F, 1, i, j);
    ASSERT_TRUE(rep.soft.pass && rep.hard.pass) << "draw " << d;
    EXPECT_EQ(rep.hard.nonpositive_second_differences, 0u);
    EXPECT_EQ(rep.soft.derivative_sign_changes, 1u);
  }
}

TEST(CoordinateConvexity, NarrowGridMissingTheMinimumFails) {
  // All of [50, 51] lies far to the right of the minimizer: derivative never changes sign.
  const auto rep = check_coordinate_convexity(symmetric_f(3, 0, 0), 1, 0, 0, 50.0, 51.0, 0.05);
  EXPECT_FALSE(rep.hard.pass);
  EXPECT_EQ(rep.hard.derivative_sign_changes, 0u);
}

TEST(DivergencePath, ClosedFormPartialsMatchFiniteDifferences) {
  RngStream rng(10, 0);
  for (auto [C, k] : {std::pair{3, 1}, std::pair{5, 2}, std::pair{4, 0}}) {
    for (int d = 0; d < 20; ++d) {
      const double a = 4 * rng.normal(), b = 4 * rng.normal();
      const auto p = symmetric_partials(C, k, a, b);
      const double h = 1e-5;
      const double fa = (r_hard(symmetric_f(C, a + h, b), k) - r_hard(symmetric_f(C, a - h, b), k)) / (2 * h);
      const double fb = (r_hard(symmetric_f(C, a, b + h), k) - r_hard(symmetric_f(C, a, b - h), k)) / (2 * h);
      EXPECT_NEAR(p[0], fa, 1e-6 * std::max(1.0, std::abs(fa)));
      EXPECT_NEAR(p[1], fb, 1e-6 * std::max(1.0, std::abs(fb)));
      EXPECT_LT(p[0], 0.0);
      EXPECT_GT(p[1], 0.0);
    }
  }
}

TEST(DivergencePath, SignAtOrigin) {
  const auto p = symmetric_partials(3, 1, 0.0, 0.0);
  // Three equal logits 2a+b, a+2b, 3b: w = 1/3 each.
  EXPECT_NEAR(p[0], 6 * (-2.0 + 1.0), 1e-12);
  EXPECT_NEAR(p[1], 6 * (-1.0 + 2.0), 1e-12);
}

TEST(DivergencePath, MonotoneAndInsideSubspace) {
  const auto tr = check_divergence_path(3, 1, 10'000, 0.1);
  EXPECT_TRUE(tr.a_strictly_increasing);
  EXPECT_TRUE(tr.b_strictly_decreasing);
  EXPECT_LE(tr.max_subspace_residual, 1e-10);
  EXPECT_EQ(tr.a.size(), 10'001u);
  EXPECT_GT(tr.a.back(), 3.0);
  EXPECT_LT(tr.b.back(), -1.0);
  EXPECT_LT(tr.max_partial_fd_error, 1e-6);
}

TEST(DivergencePath, LargerSetsAlsoDiverge) {
  const auto tr = check_divergence_path(5, 2, 500, 0.05);
  EXPECT_TRUE(tr.a_strictly_increasing);
  EXPECT_TRUE(tr.b_strictly_decreasing);
  EXPECT_LE(tr.max_subspace_residual, 1e-10);
}

TEST(DivergencePath, RejectsTooFewClasses) {
  EXPECT_THROW(check_divergence_path(3, 2, 10, 0.1), InvalidArgument);
  EXPECT_THROW(check_divergence_path(3, 1, 10, 0.0), InvalidArgument);
}

namespace {
LabeledDataset labels_only(std::vector<int> y, int C) {
  Vec x(y.size(), 0.0);
  return LabeledDataset(std::move(x), std::move(y), 1, C);
}
std::vector<std::vector<Vec>> random_tables(RngStream& rng, std::size_t n, int C, int count) {
  std::vector<std::vector<Vec>> out(count, std::vector<Vec>(n, Vec(C)));
  for (auto& t : out)
    for (auto& r : t)
      for (double& v : r) v = 2 * rng.normal();
  return out;
}
}  // namespace

TEST(BalanceEquivalence, ImbalancedCounts) {
  RngStream rng(11, 0);
  const auto ds = labels_only({0, 0, 0, 0, 1, 1}, 2);
  const auto tables = random_tables(rng, 6, 2, 5);
  const auto rep = check_balance_equivalence(ds, tables);
  EXPECT_LE(rep.max_residual, 1e-10);
  EXPECT_NEAR(rep.lambda, 1.0, 1e-12);
  EXPECT_EQ(rep.batches_enumerated, 36u);
}

TEST(BalanceEquivalence, LambdaFollowsTheScale) {
  RngStream rng(12, 0);
  const auto ds = labels_only({0, 0, 0, 1, 1, 1}, 2);
  const auto tables = random_tables(rng, 6, 2, 3);
  EXPECT_NEAR(check_balance_equivalence(ds, tables).lambda, 1.0, 1e-12);
  // lambda = n / (C a) with a = 1.5.
  const auto rep = check_balance_equivalence(ds, tables, {}, 2, 1.5);
  EXPECT_NEAR(rep.lambda, 2.0, 1e-12);
  EXPECT_LE(rep.max_residual, 1e-10);
}

TEST(BalanceEquivalence, OtherBaseLossesAndBatchSizes) {
  RngStream rng(13, 0);
  const auto ds = labels_only({0, 0, 0, 0, 0, 1, 1, 1, 2}, 3);
  const auto tables = random_tables(rng, 9, 3, 3);
  LossSpec focal_spec;
  focal_spec.kind = LossKind::kFocal;
  for (std::size_t B : {1u, 2u, 3u}) {
    EXPECT_LE(check_balance_equivalence(ds, tables, focal_spec, B).max_residual, 1e-10);
  }
}

TEST(BalanceEquivalence, Rejections) {
  RngStream rng(14, 0);
  const auto one_class = labels_only({0, 0, 0}, 1);
  EXPECT_THROW(check_balance_equivalence(one_class, random_tables(rng, 3, 1, 1)), InvalidArgument);
  const auto empty_class = labels_only({0, 0, 1}, 3);
  EXPECT_THROW(check_balance_equivalence(empty_class, random_tables(rng, 3, 3, 1)), InvalidArgument);
  const auto ds = labels_only({0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
  EXPECT_THROW(check_balance_equivalence(ds, random_tables(rng, 12, 2, 1), {}, 6), TooLarge);
}

TEST(RegularizationGap, PositiveAndShrinking) {
  const std::vector<double> eps{0.1, 0.05};
  const auto rows = check_regularization_gap(3, 1, eps);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[0].gap, 0.0);
  EXPECT_NEAR(rows[0].loss_at_uniform, std::log(3.0), 1e-12);
  EXPECT_LE(rows[1].gap, 0.5 * rows[0].gap);
}

TEST(RegularizationGap, GapIsLinearInEps) {
  // Private features see a first-order gradient at uniform logits, so the
  // excess loss of the maximal-entropy table scales like eps, not eps^2.
  const std::vector<double> eps{0.02, 0.01, 0.005};
  const auto rows = check_regularization_gap(3, 1, eps);
  for (const auto& r : rows) {
    EXPECT_GT(r.gap / r.eps, 0.6);
    EXPECT_LT(r.gap / r.eps, 0.8);
    EXPECT_LT(r.gap, std::log(3.0));
  }
}

TEST(RegularizationGap, Rejections) {
  const std::vector<double> increasing{0.05, 0.1};
  EXPECT_THROW(check_regularization_gap(3, 1, increasing), InvalidArgument);
  const std::vector<double> eps{0.1};
  EXPECT_THROW(check_regularization_gap(3, 1, eps, 10), TooLarge);
  EXPECT_THROW(check_regularization_gap(3, 1, std::span<const double>{}), InvalidArgument);
}

TEST(VerificationSuite, VerdictsAndJsonShape) {
  VerifyOptions o;
  o.rc_samples = 100'000;
  const auto rs = run_verification_suite(o);
  ASSERT_EQ(rs.size(), 9u);
  for (const auto& r : rs) {
    if (r.name == "regularization_gap_scaling") continue;
    EXPECT_TRUE(r.pass) << r.name << " " << r.error;
  }
  // The quadratic rate does not hold for this construction; the gap is linear in eps.
  const auto& gap = find(rs, "regularization_gap_scaling");
  EXPECT_TRUE(gap.error.empty());
  EXPECT_FALSE(gap.pass);
  EXPECT_TRUE(gap.measured.at("halving_ok").get<bool>());

  const auto j = suite_to_json(rs);
  EXPECT_FALSE(j.at("all_pass").get<bool>());
  for (const auto& c : j.at("checks")) {
    for (const char* key : {"name", "parameters", "measured", "thresholds", "pass"}) EXPECT_TRUE(c.contains(key));
  }
}

TEST(VerificationSuite, InjectedBrokenLossFailsTheOracle) {
  VerifyOptions o;
  o.rc_samples = 1000;
  o.hard_loss = [](std::span<const double> z, int y) {
    auto lg = oko_hard(z, y);
    lg.loss += 1e-6;
    return lg;
  };
  const auto rs = run_verification_suite(o, false);
  EXPECT_FALSE(find(rs, "q_epsilon_two_path").pass);
  EXPECT_TRUE(find(rs, "toy_minimizer_limits").pass);
}

TEST(VerificationSuite, OptionValidation) {
  VerifyOptions o;
  o.eps.clear();
  EXPECT_THROW(run_verification_suite(o), InvalidArgument);
  o.eps = {0.1, 1.2};
  EXPECT_THROW(o.validate(), InvalidArgument);
}
