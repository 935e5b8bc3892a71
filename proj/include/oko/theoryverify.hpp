#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oko/datasets.hpp"
#include "oko/losses.hpp"
#include "oko/numcore.hpp"
#include "oko/sampling.hpp"

namespace oko {

// ---------------------------------------------------------------------------
// Three-point toy problem. Inputs x in {0, 1, 2}; the model is pinned to
// f(x) = [0, a_x], so a = (a_0, a_1, a_2) is the whole parameter vector.

using Logits3 = std::array<double, 3>;

struct QRow {
  int pair_label;              // 0 or 1
  std::array<int, 3> features; // x_1, x_2, x_3
  double mass;
};

class QEpsilonObjective {
 public:
  // Throws InvalidArgument unless 0 < eps < 1 and the row masses sum to 1.
  explicit QEpsilonObjective(double eps);

  double eps() const { return eps_; }
  const std::array<QRow, 16>& rows() const { return rows_; }

  // The tabulated terms: V_i(a) is the softmax mass at the pair label.
  double term(std::size_t i, const Logits3& a) const;
  double value(const Logits3& a) const;
  Logits3 gradient(const Logits3& a) const;

 private:
  double eps_;
  std::array<QRow, 16> rows_;
};

QEpsilonObjective build_q_epsilon(double eps);

// Class/feature masses of the toy distribution, fed to the set enumerator.
ClassFeatureTable toy_feature_table(double eps);

using SetLoss = std::function<LossGrad(std::span<const double>, int)>;

// Second path: enumerate the sampler's set distribution and average the hard
// OKO loss of the summed two-logit outputs.
double q_epsilon_by_enumeration(double eps, const Logits3& a, const SetLoss& loss = oko_hard);

struct QMinimum {
  Logits3 a{};
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

// Gradient descent with Armijo backtracking from a = 0 until |grad| <= tol.
// Throws ConvergenceFailure (with an iteration trace) when the budget runs out.
QMinimum minimize_q_epsilon(const QEpsilonObjective& obj, double tol = 1e-10,
                            std::size_t max_iter = 2'000'000);

// softmax([0, a_x]) for x = 0, 1, 2.
std::array<std::array<double, 2>, 3> toy_predictions(const Logits3& a);

// Largest absolute deviation of toy_predictions(a) from the limits
// [1/2, 1/2], [2/3, 1/3], [1/3, 2/3].
double limit_deviation(const Logits3& a);

// ---------------------------------------------------------------------------
// Memorizing model: F[i] is the logit vector output for every input of class i.

using FMatrix = std::vector<Vec>;

// Risks summed over pair class i and unordered odd subsets Y of [C] \ {i},
// with set logits 2 F_i + sum_{y in Y} F_y.
double r_hard(const FMatrix& F, int k);
double r_soft(const FMatrix& F, int k);
// Gradients with respect to every entry of F.
FMatrix r_hard_grad(const FMatrix& F, int k);
FMatrix r_soft_grad(const FMatrix& F, int k);

struct ConvexityReport {
  std::size_t grid_points = 0;
  double min_second_difference = 0.0;
  std::size_t nonpositive_second_differences = 0;
  std::size_t derivative_sign_changes = 0;
  double derivative_lo = 0.0;  // at the first grid point
  double derivative_hi = 0.0;  // at the last grid point
  bool pass = false;
};

struct ConvexityPair {
  ConvexityReport soft;
  ConvexityReport hard;
};

// Sweeps F_{i,j} over lo, lo + step, ..., hi with every other entry fixed.
ConvexityPair check_coordinate_convexity(const FMatrix& F, int k, int i, int j, double lo = -10.0,
                                         double hi = 10.0, double step = 0.05);

// F(a, b): a on the diagonal, b elsewhere.
FMatrix symmetric_f(int C, double a, double b);

// Closed-form partials of R_hard(F(a, b)).
std::array<double, 2> symmetric_partials(int C, int k, double a, double b);

struct DivergenceTrace {
  std::vector<double> a;  // diagonal value after each step, a[0] = 0
  std::vector<double> b;
  double max_subspace_residual = 0.0;
  bool a_strictly_increasing = false;
  bool b_strictly_decreasing = false;
  std::size_t sign_points = 0;
  double max_partial_fd_error = 0.0;  // relative, closed form vs. central differences
};

// Full-matrix gradient descent on R_hard from F(0, 0). Throws PropertyFailure
// naming the point if the sign conditions fail at any of `sign_points` random
// (a, b) in [-5, 5]^2.
DivergenceTrace check_divergence_path(int C, int k, std::size_t steps = 10'000,
                                      double step_size = 0.1, std::size_t sign_points = 100,
                                      std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

struct BalanceReport {
  double lambda = 0.0;        // recovered from the first logit table
  double expected_lambda = 0.0;  // n / (C a)
  double max_residual = 0.0;  // max |lambda E_uniform - E_balanced| over tables
  std::size_t batches_enumerated = 0;
};

// `tables[t][r]` is the logit vector of row r under parameter setting t.
// Expectations over every ordered batch of `batch_size` rows, uniform versus
// class-balanced selection; the re-weighted loss is (a / n_y) times `base`.
BalanceReport check_balance_equivalence(const LabeledDataset& ds,
                                        std::span<const std::vector<Vec>> tables,
                                        const LossSpec& base = {}, std::size_t batch_size = 2,
                                        double weight_scale = 0.0);

// ---------------------------------------------------------------------------

struct GapRow {
  double eps = 0.0;
  double loss_at_uniform = 0.0;  // log C
  double loss_min = 0.0;
  double gap = 0.0;
  std::size_t iterations = 0;
};

// Expected hard OKO loss over a shared feature (mass 1 - eps in every class)
// plus one private feature per class (mass eps), with one free logit vector
// per feature. gap = loss at uniform predictions minus the numeric minimum.
std::vector<GapRow> check_regularization_gap(int C, int k, std::span<const double> eps_list,
                                             std::size_t max_sets = 1'000'000);

// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json measured = nlohmann::json::object();
  nlohmann::json thresholds = nlohmann::json::object();
  bool pass = false;
  std::string error;  // set when the check threw
};

struct VerifyOptions {
  std::vector<double> eps{0.1, 0.01, 0.001};
  std::vector<double> gap_eps{0.1, 0.05, 0.025, 0.0125};
  std::size_t rc_samples = 1'000'000;
  std::size_t property_draws = 10'000;
  std::size_t divergence_steps = 10'000;
  std::uint64_t seed = 0;
  // Test hook: replaces the hard OKO loss in the enumeration oracle.
  SetLoss hard_loss = oko_hard;

  void validate() const;
};

std::vector<CheckResult> run_verification_suite(const VerifyOptions& opts, bool parallel = true);

nlohmann::json to_json(const CheckResult& r);
nlohmann::json suite_to_json(std::span<const CheckResult> results);

}  // namespace oko
