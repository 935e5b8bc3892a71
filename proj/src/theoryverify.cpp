#include "oko/theoryverify.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "oko/calibration.hpp"
#include "oko/errors.hpp"

namespace oko {
namespace {

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct DescentResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

using Objective = std::function<double(std::span<const double>)>;
using Gradient = std::function<Vec(std::span<const double>)>;

// Steepest descent with backtracking. Once function differences sink into
// rounding noise the sufficient-decrease test switches to the derivative
// form phi'(t) <= (2c - 1) phi'(0), which stays informative down to tiny
// gradients.
DescentResult armijo_descent(const Objective& f, const Gradient& grad, std::vector<double> x,
                             double tol, std::size_t max_iter, const char* what) {
  constexpr double c = 0.1;
  double fx = f(x);
  Vec g = grad(x);
  double gn = norm2(g);
  double t = 1.0;
  std::ostringstream trace;
  std::vector<double> trial(x.size());
  std::size_t it = 0;
  for (; it < max_iter && gn > tol; ++it) {
    if (it % 1000 == 0 && it > 0) trace << "iter " << it << " f=" << fx << " |g|=" << gn << "\n";
    const double g2 = gn * gn;
    t = std::min(2.0 * t, 1e3);
    bool accepted = false;
    for (int halvings = 0; halvings < 80; ++halvings, t *= 0.5) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - t * g[i];
      const double ft = f(trial);
      if (!std::isfinite(ft)) continue;
      const double noise = 1e-14 * (1.0 + std::abs(fx));
      if (ft <= fx - c * t * g2 && std::abs(ft - fx) > noise) {
        accepted = true;
      } else if (std::abs(ft - fx) <= noise) {
        const Vec gt = grad(trial);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += gt[i] * g[i];
        accepted = dot >= (2 * c - 1) * g2;
      }
      if (accepted) {
        x.swap(trial);
        fx = ft;
        break;
      }
    }
    if (!accepted) break;
    g = grad(x);
    gn = norm2(g);
  }
  if (gn > tol) {
    trace << "stopped at iter " << it << " f=" << fx << " |g|=" << gn << " t=" << t << "\n";
    throw ConvergenceFailure(std::string(what) + ": gradient norm " + std::to_string(gn) +
                                 " above tolerance",
                             trace.str());
  }
  return {std::move(x), fx, gn, it};
}

void for_each_subset(int n_items, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  if (k > n_items) return;
  while (true) {
    fn(idx);
    int p = k - 1;
    while (p >= 0 && idx[static_cast<std::size_t>(p)] == n_items - k + p) --p;
    if (p < 0) return;
    ++idx[static_cast<std::size_t>(p)];
    for (int q = p + 1; q < k; ++q) idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
  }
}

void check_f(const FMatrix& F, int k) {
  const auto C = F.size();
  if (C < 2) throw InvalidArgument("F must have at least two classes");
  for (const auto& row : F) {
    if (row.size() != C) throw InvalidArgument("F must be square");
    if (!all_finite(row)) throw InvalidArgument("F has non-finite entries");
  }
  if (k < 0 || static_cast<std::size_t>(k) + 1 > C) throw InvalidArgument("k must be in [0, C - 1]");
}

// Visits every (i, Y) summand with its set logits z = 2 F_i + sum_{y in Y} F_y.
void for_each_summand(const FMatrix& F, int k,
                      const std::function<void(int, const std::vector<int>&, const Vec&)>& fn) {
  check_f(F, k);
  const int C = static_cast<int>(F.size());
  Vec z(F.size());
  std::vector<int> odd(static_cast<std::size_t>(k));
  for (int i = 0; i < C; ++i) {
    for_each_subset(C - 1, k, [&](const std::vector<int>& sub) {
      for (std::size_t m = 0; m < sub.size(); ++m) odd[m] = sub[m] < i ? sub[m] : sub[m] + 1;
      for (int c = 0; c < C; ++c) {
        double s = 2.0 * F[i][c];
        for (int y : odd) s += F[y][c];
        z[c] = s;
      }
      fn(i, odd, z);
    });
  }
}

FMatrix zero_f(std::size_t C) { return FMatrix(C, Vec(C, 0.0)); }

void add_summand_grad(FMatrix& G, int i, const std::vector<int>& odd, const Vec& g) {
  for (std::size_t c = 0; c < g.size(); ++c) {
    G[i][c] += 2.0 * g[c];
    for (int y : odd) G[y][c] += g[c];
  }
}

}  // namespace

// ---------------------------------------------------------------------------

QEpsilonObjective::QEpsilonObjective(double eps) : eps_(eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
  const double e = eps;
  const double m0 = std::pow(1 - e, 3) / 2;
  const double m1 = e * (1 - e) * (1 - e) / 2;
  const double m2 = e * e * (1 - e) / 2;
  const double m3 = e * e * e / 2;
  rows_ = {{
      {0, {0, 0, 0}, m0}, {1, {0, 0, 0}, m0},
      {0, {0, 0, 2}, m1}, {0, {1, 0, 0}, m1}, {0, {0, 1, 0}, m1},
      {1, {0, 0, 1}, m1}, {1, {2, 0, 0}, m1}, {1, {0, 2, 0}, m1},
      {0, {1, 1, 0}, m2}, {0, {1, 0, 2}, m2}, {0, {0, 1, 2}, m2},
      {1, {2, 2, 0}, m2}, {1, {2, 0, 1}, m2}, {1, {0, 2, 1}, m2},
      {0, {1, 1, 2}, m3}, {1, {2, 2, 1}, m3},
  }};
  double total = 0.0;
  for (const auto& r : rows_) total += r.mass;
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("Q_eps row masses do not sum to 1");
}

namespace {
double row_sum(const QRow& r, const Logits3& a) {
  return a[r.features[0]] + a[r.features[1]] + a[r.features[2]];
}
}  // namespace

double QEpsilonObjective::term(std::size_t i, const Logits3& a) const {
  const QRow& r = rows_.at(i);
  const double s = row_sum(r, a);
  return r.pair_label == 0 ? sigmoid(-s) : sigmoid(s);
}

double QEpsilonObjective::value(const Logits3& a) const {
  double q = 0.0;
  for (const auto& r : rows_) {
    const double s = row_sum(r, a);
    q += r.mass * (r.pair_label == 0 ? softplus(s) : softplus(-s));
  }
  return q;
}

Logits3 QEpsilonObjective::gradient(const Logits3& a) const {
  Logits3 g{};
  for (const auto& r : rows_) {
    const double s = row_sum(r, a);
    const double ds = r.mass * (r.pair_label == 0 ? sigmoid(s) : -sigmoid(-s));
    for (int f : r.features) g[f] += ds;
  }
  return g;
}

QEpsilonObjective build_q_epsilon(double eps) { return QEpsilonObjective(eps); }

ClassFeatureTable toy_feature_table(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
  return {{{0, (1 - eps) / 2}, {1, eps / 2}}, {{0, (1 - eps) / 2}, {2, eps / 2}}};
}

double q_epsilon_by_enumeration(double eps, const Logits3& a, const SetLoss& loss) {
  const auto sets = enumerate_set_distribution(toy_feature_table(eps), 1);
  double q = 0.0;
  Vec z(2);
  for (const auto& s : sets) {
    z[0] = 0.0;
    z[1] = 0.0;
    for (int f : s.features) z[1] += a[static_cast<std::size_t>(f)];
    q += s.mass * loss(z, s.labels[0]).loss;
  }
  return q;
}

QMinimum minimize_q_epsilon(const QEpsilonObjective& obj, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  auto f = [&](std::span<const double> x) { return obj.value({x[0], x[1], x[2]}); };
  auto g = [&](std::span<const double> x) {
    const auto gr = obj.gradient({x[0], x[1], x[2]});
    return Vec(gr.begin(), gr.end());
  };
  const auto r = armijo_descent(f, g, {0.0, 0.0, 0.0}, tol, max_iter, "minimize_q_epsilon");
  return {{r.x[0], r.x[1], r.x[2]}, r.f, r.grad_norm, r.iterations};
}

std::array<std::array<double, 2>, 3> toy_predictions(const Logits3& a) {
  std::array<std::array<double, 2>, 3> out{};
  for (int x = 0; x < 3; ++x) out[x] = {sigmoid(-a[x]), sigmoid(a[x])};
  return out;
}

double limit_deviation(const Logits3& a) {
  constexpr double lim[3][2] = {{0.5, 0.5}, {2.0 / 3, 1.0 / 3}, {1.0 / 3, 2.0 / 3}};
  const auto p = toy_predictions(a);
  double dev = 0.0;
  for (int x = 0; x < 3; ++x)
    for (int c = 0; c < 2; ++c) dev = std::max(dev, std::abs(p[x][c] - lim[x][c]));
  return dev;
}

// ---------------------------------------------------------------------------

double r_hard(const FMatrix& F, int k) {
  double r = 0.0;
  for_each_summand(F, k, [&](int i, const std::vector<int>&, const Vec& z) {
    r += log_sum_exp(z) - z[i];
  });
  return r;
}

double r_soft(const FMatrix& F, int k) {
  double r = 0.0;
  for_each_summand(F, k, [&](int i, const std::vector<int>& odd, const Vec& z) {
    const double lse = log_sum_exp(z);
    r += 2.0 * (lse - z[i]);
    for (int y : odd) r += lse - z[y];
  });
  return r;
}

FMatrix r_hard_grad(const FMatrix& F, int k) {
  FMatrix G = zero_f(F.size());
  for_each_summand(F, k, [&](int i, const std::vector<int>& odd, const Vec& z) {
    Vec g = softmax(z);
    g[i] -= 1.0;
    add_summand_grad(G, i, odd, g);
  });
  return G;
}

FMatrix r_soft_grad(const FMatrix& F, int k) {
  FMatrix G = zero_f(F.size());
  for_each_summand(F, k, [&](int i, const std::vector<int>& odd, const Vec& z) {
    Vec g = softmax(z);
    for (double& v : g) v *= k + 2;
    g[i] -= 2.0;
    for (int y : odd) g[y] -= 1.0;
    add_summand_grad(G, i, odd, g);
  });
  return G;
}

ConvexityPair check_coordinate_convexity(const FMatrix& F0, int k, int i, int j, double lo,
                                         double hi, double step) {
  check_f(F0, k);
  const int C = static_cast<int>(F0.size());
  if (i < 0 || j < 0 || i >= C || j >= C) throw InvalidArgument("coordinate out of range");
  if (!(step > 0.0) || !(hi > lo)) throw InvalidArgument("grid must satisfy lo < hi, step > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (n < 3) throw InvalidArgument("grid needs at least three points");

  FMatrix F = F0;
  std::vector<double> vs(n), vh(n), ds(n), dh(n);
  for (std::size_t p = 0; p < n; ++p) {
    F[i][j] = lo + static_cast<double>(p) * step;
    vs[p] = r_soft(F, k);
    vh[p] = r_hard(F, k);
    ds[p] = r_soft_grad(F, k)[i][j];
    dh[p] = r_hard_grad(F, k)[i][j];
  }
  auto summarize = [&](const std::vector<double>& v, const std::vector<double>& d) {
    ConvexityReport r;
    r.grid_points = n;
    r.min_second_difference = INFINITY;
    for (std::size_t p = 1; p + 1 < n; ++p) {
      const double dd = v[p + 1] - 2.0 * v[p] + v[p - 1];
      r.min_second_difference = std::min(r.min_second_difference, dd);
      if (!(dd > 0.0)) ++r.nonpositive_second_differences;
    }
    int last_sign = 0;
    for (double x : d) {
      const int s = (x > 0) - (x < 0);
      if (s == 0) continue;
      if (last_sign != 0 && s != last_sign) ++r.derivative_sign_changes;
      last_sign = s;
    }
    r.derivative_lo = d.front();
    r.derivative_hi = d.back();
    r.pass = r.nonpositive_second_differences == 0 && r.derivative_sign_changes == 1 &&
             r.derivative_lo < 0 && r.derivative_hi > 0;
    return r;
  };
  return {summarize(vs, ds), summarize(vh, dh)};
}

FMatrix symmetric_f(int C, double a, double b) {
  if (C < 2) throw InvalidArgument("C must be at least 2");
  FMatrix F(static_cast<std::size_t>(C), Vec(static_cast<std::size_t>(C), b));
  for (int i = 0; i < C; ++i) F[i][i] = a;
  return F;
}

std::array<double, 2> symmetric_partials(int C, int k, double a, double b) {
  if (k < 0 || C < k + 2) throw InvalidArgument("need C >= k + 2");
  // Every summand is -log of exp(A) / (exp(A) + k exp(B) + (C-k-1) exp(D)).
  const double A = 2 * a + k * b;
  const double B = a + (k + 1) * b;
  const double D = (k + 2) * b;
  Vec w;
  if (k == 0) {
    const Vec two = softmax(Vec{A, std::log(static_cast<double>(C - 1)) + D});
    w = {two[0], 0.0, two[1]};
  } else {
    w = softmax(Vec{A, std::log(static_cast<double>(k)) + B, std::log(static_cast<double>(C - k - 1)) + D});
  }
  const double da = -2.0 + 2.0 * w[0] + w[1];
  const double db = -k + k * w[0] + (k + 1) * w[1] + (k + 2) * w[2];
  double summands = C;
  for (int m = 0; m < k; ++m) summands *= static_cast<double>(C - 1 - m) / (m + 1);
  return {summands * da, summands * db};
}

DivergenceTrace check_divergence_path(int C, int k, std::size_t steps, double step_size,
                                      std::size_t sign_points, std::uint64_t seed) {
  if (k < 0 || C < k + 2) throw InvalidArgument("need C >= k + 2");
  if (!(step_size > 0.0)) throw InvalidArgument("step_size must be positive");
  DivergenceTrace tr;
  FMatrix F = symmetric_f(C, 0.0, 0.0);
  tr.a.reserve(steps + 1);
  tr.b.reserve(steps + 1);
  tr.a.push_back(0.0);
  tr.b.push_back(0.0);
  tr.a_strictly_increasing = true;
  tr.b_strictly_decreasing = true;
  for (std::size_t s = 0; s < steps; ++s) {
    const FMatrix G = r_hard_grad(F, k);
    for (int r = 0; r < C; ++r)
      for (int c = 0; c < C; ++c) F[r][c] -= step_size * G[r][c];
    const double a = F[0][0];
    const double b = F[0][1];
    for (int r = 0; r < C; ++r)
      for (int c = 0; c < C; ++c)
        tr.max_subspace_residual = std::max(tr.max_subspace_residual, std::abs(F[r][c] - (r == c ? a : b)));
    if (!(a > tr.a.back())) tr.a_strictly_increasing = false;
    if (!(b < tr.b.back())) tr.b_strictly_decreasing = false;
    tr.a.push_back(a);
    tr.b.push_back(b);
  }

  RngStream rng(seed, 0x5e);
  const double h = 1e-5;
  for (std::size_t p = 0; p < sign_points; ++p) {
    const double a = -5.0 + 10.0 * rng.uniform01();
    const double b = -5.0 + 10.0 * rng.uniform01();
    const auto d = symmetric_partials(C, k, a, b);
    if (!(d[0] < 0.0) || !(d[1] > 0.0)) {
      std::ostringstream os;
      os << "sign condition violated at (a, b) = (" << a << ", " << b << "): dR/da = " << d[0]
         << ", dR/db = " << d[1];
      throw PropertyFailure(os.str());
    }
    const double fa = (r_hard(symmetric_f(C, a + h, b), k) - r_hard(symmetric_f(C, a - h, b), k)) / (2 * h);
    const double fb = (r_hard(symmetric_f(C, a, b + h), k) - r_hard(symmetric_f(C, a, b - h), k)) / (2 * h);
    tr.max_partial_fd_error = std::max(
        {tr.max_partial_fd_error, std::abs(fa - d[0]) / std::max(1.0, std::abs(d[0])),
         std::abs(fb - d[1]) / std::max(1.0, std::abs(d[1]))});
  }
  tr.sign_points = sign_points;
  return tr;
}

// ---------------------------------------------------------------------------

BalanceReport check_balance_equivalence(const LabeledDataset& ds,
                                        std::span<const std::vector<Vec>> tables,
                                        const LossSpec& base, std::size_t batch_size,
                                        double weight_scale) {
  const std::size_t n = ds.size();
  const int C = ds.num_classes();
  if (C < 2) throw InvalidArgument("balance check needs at least two classes");
  const auto counts = ds.class_counts();
  for (int c = 0; c < C; ++c)
    if (counts[c] == 0) throw InvalidArgument("class " + std::to_string(c) + " has no members");
  if (tables.empty()) throw InvalidArgument("at least one logit table is required");
  if (base.is_set_loss() || base.kind == LossKind::kWeighted)
    throw InvalidArgument("base loss must be an unweighted single-example loss");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  double total = 1.0;
  for (std::size_t b = 0; b < batch_size; ++b) {
    total *= static_cast<double>(n);
    if (total > 1e6) throw TooLarge("balance check would enumerate more than 1e6 batches");
  }
  const double a = weight_scale > 0.0 ? weight_scale : static_cast<double>(n) / C;

  BalanceReport rep;
  rep.expected_lambda = static_cast<double>(n) / (C * a);
  rep.batches_enumerated = static_cast<std::size_t>(total);
  std::vector<double> eu, eb;
  for (const auto& table : tables) {
    if (table.size() != n) throw InvalidArgument("logit table must have one row per example");
    std::vector<double> loss(n), weight(n), p_bal(n);
    for (std::size_t r = 0; r < n; ++r) {
      const int y = ds.label(r);
      if (table[r].size() != static_cast<std::size_t>(C)) throw InvalidArgument("logit width must equal C");
      loss[r] = evaluate_example_loss(base, table[r], y).loss;
      weight[r] = a / static_cast<double>(counts[y]);
      p_bal[r] = 1.0 / (C * static_cast<double>(counts[y]));
    }
    // Odometer over all ordered batches.
    std::vector<std::size_t> idx(batch_size, 0);
    double e_uniform = 0.0, e_balanced = 0.0;
    const double p_uniform = 1.0 / total;
    while (true) {
      double rw = 0.0, van = 0.0, pb = 1.0;
      for (std::size_t r : idx) {
        rw += weight[r] * loss[r];
        van += loss[r];
        pb *= p_bal[r];
      }
      e_uniform += p_uniform * rw / static_cast<double>(batch_size);
      e_balanced += pb * van / static_cast<double>(batch_size);
      std::size_t p = 0;
      while (p < batch_size && ++idx[p] == n) idx[p++] = 0;
      if (p == batch_size) break;
    }
    eu.push_back(e_uniform);
    eb.push_back(e_balanced);
  }
  rep.lambda = eb[0] / eu[0];
  for (std::size_t t = 0; t < eu.size(); ++t)
    rep.max_residual = std::max(rep.max_residual, std::abs(rep.lambda * eu[t] - eb[t]));
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<GapRow> check_regularization_gap(int C, int k, std::span<const double> eps_list,
                                             std::size_t max_sets) {
  if (C < 2 || k < 0 || k > C - 1) throw InvalidArgument("need C >= 2 and 0 <= k <= C - 1");
  if (eps_list.empty()) throw InvalidArgument("eps list is empty");
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    if (!(eps_list[e] > 0.0 && eps_list[e] < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
    if (e > 0 && !(eps_list[e] < eps_list[e - 1])) throw InvalidArgument("eps list must be decreasing");
  }
  const auto Cs = static_cast<std::size_t>(C);
  const std::size_t n_feat = Cs + 1;  // 0 is shared, c + 1 is private to class c

  std::vector<GapRow> out;
  for (double eps : eps_list) {
    ClassFeatureTable table(Cs);
    for (int c = 0; c < C; ++c) table[c] = {{0, 1.0 - eps}, {c + 1, eps}};
    const auto sets = enumerate_set_distribution(table, k, PairDraw::kIndependent, max_sets);

    auto set_logits = [&](std::span<const double> w, const WeightedSet& s) {
      Vec z(Cs, 0.0);
      for (int f : s.features)
        for (std::size_t c = 0; c < Cs; ++c) z[c] += w[static_cast<std::size_t>(f) * Cs + c];
      return z;
    };
    auto loss = [&](std::span<const double> w) {
      double L = 0.0;
      for (const auto& s : sets) L += s.mass * oko_hard(set_logits(w, s), s.labels[0]).loss;
      return L;
    };
    auto grad = [&](std::span<const double> w) {
      Vec g(n_feat * Cs, 0.0);
      for (const auto& s : sets) {
        const LossGrad lg = oko_hard(set_logits(w, s), s.labels[0]);
        for (int f : s.features)
          for (std::size_t c = 0; c < Cs; ++c) g[static_cast<std::size_t>(f) * Cs + c] += s.mass * lg.grad[c];
      }
      return g;
    };
    GapRow row;
    row.eps = eps;
    row.loss_at_uniform = loss(Vec(n_feat * Cs, 0.0));
    const auto r = armijo_descent(loss, grad, Vec(n_feat * Cs, 0.0), 1e-11, 2'000'000,
                                  "check_regularization_gap");
    row.loss_min = r.f;
    row.gap = row.loss_at_uniform - row.loss_min;
    row.iterations = r.iterations;
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------

void VerifyOptions::validate() const {
  if (eps.empty()) throw InvalidArgument("eps list is empty");
  for (double e : eps)
    if (!(e > 0.0 && e < 1.0)) throw InvalidArgument("eps values must lie in (0, 1)");
  if (gap_eps.size() < 2) throw InvalidArgument("gap eps list needs at least two values");
  for (double e : gap_eps)
    if (!(e > 0.0 && e < 1.0)) throw InvalidArgument("gap eps values must lie in (0, 1)");
  if (rc_samples < 2 || property_draws == 0 || divergence_steps == 0)
    throw InvalidArgument("sample budgets must be positive");
  if (!hard_loss) throw InvalidArgument("hard_loss hook is empty");
}

namespace {

using nlohmann::json;

CheckResult toy_minimizer_limits(const VerifyOptions& o) {
  CheckResult r;
  r.name = "toy_minimizer_limits";
  std::vector<double> eps = o.eps;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  r.parameters = {{"eps", eps}, {"tol", 1e-10}, {"start", {0.0, 0.0, 0.0}}};
  r.thresholds = {{"limit_deviation_at_smallest_eps", 0.01}, {"deviation_nonincreasing", true}};
  std::vector<double> devs;
  json minima = json::array();
  for (double e : eps) {
    const auto m = minimize_q_epsilon(build_q_epsilon(e));
    const double dev = limit_deviation(m.a);
    devs.push_back(dev);
    const auto p = toy_predictions(m.a);
    minima.push_back({{"eps", e}, {"a", m.a}, {"q", m.value}, {"grad_norm", m.grad_norm},
                      {"iterations", m.iterations}, {"softmax", p}, {"limit_deviation", dev},
                      {"distance_to_a_star", std::max({std::abs(m.a[0]), std::abs(m.a[1] + std::log(2.0)),
                                                       std::abs(m.a[2] - std::log(2.0))})}});
  }
  bool monotone = true;
  for (std::size_t i = 1; i < devs.size(); ++i) monotone = monotone && devs[i] <= devs[i - 1];
  r.measured = {{"minima", minima}, {"deviation_nonincreasing", monotone}};
  r.pass = monotone && devs.back() <= 0.01;
  return r;
}

CheckResult q_two_path(const VerifyOptions& o) {
  CheckResult r;
  r.name = "q_epsilon_two_path";
  r.parameters = {{"eps", o.eps}, {"points_per_eps", 5}};
  r.thresholds = {{"max_abs_difference", 1e-12}, {"mass_sum_error", 1e-12}};
  RngStream rng(o.seed, 0x71);
  double max_diff = 0.0, mass_err = 0.0;
  for (double e : o.eps) {
    const auto q = build_q_epsilon(e);
    double total = 0.0;
    for (const auto& row : q.rows()) total += row.mass;
    mass_err = std::max(mass_err, std::abs(total - 1.0));
    for (int p = 0; p < 5; ++p) {
      const Logits3 a{2 * rng.normal(), 2 * rng.normal(), 2 * rng.normal()};
      max_diff = std::max(max_diff, std::abs(q.value(a) - q_epsilon_by_enumeration(e, a, o.hard_loss)));
    }
  }
  r.measured = {{"max_abs_difference", max_diff}, {"mass_sum_error", mass_err}};
  r.pass = max_diff <= 1e-12 && mass_err <= 1e-12;
  return r;
}

Vec random_distribution(RngStream& rng, std::size_t C, double scale) {
  Vec z(C);
  for (double& v : z) v = scale * rng.normal();
  return softmax(z);
}

CheckResult rc_nonnegative(const VerifyOptions& o) {
  CheckResult r;
  r.name = "rc_nonnegative_below_uniform";
  r.parameters = {{"draws", o.property_draws}, {"classes", {2, 10}}};
  r.thresholds = {{"min_rc", -1e-9}};
  RngStream rng(o.seed, 0x72);
  std::size_t violations = 0;
  double min_rc = INFINITY;
  for (std::size_t d = 0; d < o.property_draws; ++d) {
    const std::size_t C = 2 + rng.uniform_index(9);
    const Vec q = random_distribution(rng, C, 0.5 + 3.0 * rng.uniform01());
    std::vector<int> eligible;
    for (std::size_t c = 0; c < C; ++c)
      if (q[c] <= 1.0 / static_cast<double>(C)) eligible.push_back(static_cast<int>(c));
    const int y = eligible[rng.uniform_index(eligible.size())];
    const double v = rc(y, q);
    min_rc = std::min(min_rc, v);
    if (v < -1e-9) ++violations;
  }
  r.measured = {{"min_rc", min_rc}, {"violations", violations}};
  r.pass = violations == 0;
  return r;
}

CheckResult rc_calibrated(const VerifyOptions& o) {
  CheckResult r;
  r.name = "rc_mean_zero_when_calibrated";
  constexpr std::size_t C = 5;
  r.parameters = {{"samples", o.rc_samples}, {"classes", C}};
  r.thresholds = {{"max_standard_errors", 3.0}};
  RngStream rng(o.seed, 0x73);
  std::vector<Vec> probs(o.rc_samples);
  std::vector<int> labels(o.rc_samples);
  for (std::size_t i = 0; i < o.rc_samples; ++i) {
    probs[i] = random_distribution(rng, C, 1.5);
    double u = rng.uniform01();
    int y = static_cast<int>(C) - 1;
    for (std::size_t c = 0; c < C; ++c) {
      if (u < probs[i][c]) {
        y = static_cast<int>(c);
        break;
      }
      u -= probs[i][c];
    }
    labels[i] = y;
  }
  const auto st = rc_stats(probs, labels);
  const double z = st.std_error > 0 ? std::abs(st.mean) / st.std_error : INFINITY;
  r.measured = {{"mean_rc", st.mean}, {"std_error", st.std_error}, {"z", z}, {"infinite", st.n_infinite}};
  r.pass = z <= 3.0;
  return r;
}

CheckResult first_logit_pinning_check(const VerifyOptions& o) {
  CheckResult r;
  r.name = "first_logit_pinning";
  r.parameters = {{"draws", 1000}, {"vectors", 4}, {"dim", 5}};
  r.thresholds = {{"max_abs_difference", 1e-12}};
  RngStream rng(o.seed, 0x74);
  double max_diff = 0.0;
  for (int d = 0; d < 1000; ++d) {
    Vec a(5, 0.0), b(5, 0.0);
    for (int m = 0; m < 4; ++m) {
      const double w = rng.normal();
      Vec v(5);
      for (double& x : v) x = 3.0 * rng.normal();
      for (int c = 0; c < 5; ++c) {
        a[c] += w * v[c];
        b[c] += w * (v[c] - v[0]);
      }
    }
    const Vec pa = softmax(a), pb = softmax(b);
    for (int c = 0; c < 5; ++c) max_diff = std::max(max_diff, std::abs(pa[c] - pb[c]));
  }
  r.measured = {{"max_abs_difference", max_diff}};
  r.pass = max_diff <= 1e-12;
  return r;
}

std::vector<Vec> random_table(RngStream& rng, std::size_t n, int C) {
  std::vector<Vec> t(n, Vec(static_cast<std::size_t>(C)));
  for (auto& row : t)
    for (double& v : row) v = 2.0 * rng.normal();
  return t;
}

CheckResult balance_check(const VerifyOptions& o) {
  CheckResult r;
  r.name = "balance_equivalence";
  const std::vector<std::vector<int>> datasets{
      {0, 0, 0, 0, 1, 1}, {0, 0, 0, 1, 1, 1}, {0, 0, 0, 0, 0, 1, 1, 1, 2}, {0, 1, 1, 2, 2, 2, 3, 3, 3, 3, 3, 3}};
  r.parameters = {{"labels", datasets}, {"tables_per_dataset", 4}, {"batch_size", 2}, {"weight_scale", "n / C"}};
  r.thresholds = {{"max_residual", 1e-10}};
  RngStream rng(o.seed, 0x75);
  json per = json::array();
  bool pass = true;
  for (const auto& labels : datasets) {
    const int C = *std::max_element(labels.begin(), labels.end()) + 1;
    LabeledDataset ds(Vec(labels.size(), 0.0), labels, 1, C);
    std::vector<std::vector<Vec>> tables;
    for (int t = 0; t < 4; ++t) tables.push_back(random_table(rng, labels.size(), C));
    const auto rep = check_balance_equivalence(ds, tables);
    pass = pass && rep.max_residual <= 1e-10;
    per.push_back({{"n", labels.size()}, {"lambda", rep.lambda}, {"expected_lambda", rep.expected_lambda},
                   {"max_residual", rep.max_residual}});
  }
  r.measured = {{"datasets", per}};
  r.pass = pass;
  return r;
}

CheckResult convexity_check(const VerifyOptions& o) {
  CheckResult r;
  r.name = "coordinate_convexity";
  constexpr int C = 3, k = 1, draws = 100;
  r.parameters = {{"C", C}, {"k", k}, {"draws", draws}, {"grid", {-10.0, 10.0, 0.05}}};
  r.thresholds = {{"second_difference", "> 0"}, {"derivative_sign_changes", 1}};
  RngStream rng(o.seed, 0x76);
  std::size_t failures = 0, diagonal = 0;
  double min_dd = INFINITY;
  for (int d = 0; d < draws; ++d) {
    FMatrix F(C, Vec(C));
    for (auto& row : F)
      for (double& v : row) v = rng.normal();
    const int i = static_cast<int>(rng.uniform_index(C));
    const int j = static_cast<int>(rng.uniform_index(C));
    diagonal += i == j;
    const auto rep = check_coordinate_convexity(F, k, i, j);
    for (const auto* x : {&rep.soft, &rep.hard}) {
      min_dd = std::min(min_dd, x->min_second_difference);
      if (!x->pass) ++failures;
    }
  }
  r.measured = {{"failed_sweeps", failures}, {"min_second_difference", min_dd},
                {"diagonal_draws", diagonal}, {"off_diagonal_draws", draws - static_cast<int>(diagonal)}};
  r.pass = failures == 0;
  return r;
}

CheckResult divergence_check(const VerifyOptions& o) {
  CheckResult r;
  r.name = "divergence_path";
  constexpr int C = 3, k = 1;
  r.parameters = {{"C", C}, {"k", k}, {"steps", o.divergence_steps}, {"step_size", 0.1}, {"sign_points", 100}};
  r.thresholds = {{"subspace_residual", 1e-10}, {"partial_fd_relative_error", 1e-6}};
  const auto tr = check_divergence_path(C, k, o.divergence_steps, 0.1, 100, o.seed);
  r.measured = {{"a_final", tr.a.back()}, {"b_final", tr.b.back()},
                {"a_strictly_increasing", tr.a_strictly_increasing},
                {"b_strictly_decreasing", tr.b_strictly_decreasing},
                {"max_subspace_residual", tr.max_subspace_residual},
                {"max_partial_fd_error", tr.max_partial_fd_error}};
  r.pass = tr.a_strictly_increasing && tr.b_strictly_decreasing && tr.max_subspace_residual <= 1e-10 &&
           tr.max_partial_fd_error <= 1e-6;
  return r;
}

CheckResult regularization_gap(const VerifyOptions& o) {
  CheckResult r;
  r.name = "regularization_gap_scaling";
  constexpr int C = 3, k = 1;
  r.parameters = {{"C", C}, {"k", k}, {"eps", o.gap_eps}};
  r.thresholds = {{"halving_ratio_max", 0.5}, {"gap_over_eps2_spread_max", 4.0}};
  const auto rows = check_regularization_gap(C, k, o.gap_eps);
  json table = json::array();
  bool halving_ok = true;
  double lo = INFINITY, hi = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double scaled = rows[i].gap / (rows[i].eps * rows[i].eps);
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
    json row = {{"eps", rows[i].eps}, {"gap", rows[i].gap}, {"gap_over_eps", rows[i].gap / rows[i].eps},
                {"gap_over_eps2", scaled}, {"loss_at_uniform", rows[i].loss_at_uniform},
                {"loss_min", rows[i].loss_min}};
    if (i > 0) {
      const double ratio = rows[i].gap / rows[i - 1].gap;
      row["ratio_to_previous"] = ratio;
      halving_ok = halving_ok && ratio <= 0.5;
    }
    halving_ok = halving_ok && rows[i].gap > 0.0;
    table.push_back(row);
  }
  const double spread = lo > 0 ? hi / lo : INFINITY;
  r.measured = {{"rows", table}, {"gap_over_eps2_spread", spread}, {"halving_ok", halving_ok}};
  r.pass = halving_ok && spread < 4.0;
  return r;
}

}  // namespace

std::vector<CheckResult> run_verification_suite(const VerifyOptions& opts, bool parallel) {
  opts.validate();
  using Fn = CheckResult (*)(const VerifyOptions&);
  const std::vector<std::pair<const char*, Fn>> checks{
      {"toy_minimizer_limits", toy_minimizer_limits},
      {"q_epsilon_two_path", q_two_path},
      {"rc_nonnegative_below_uniform", rc_nonnegative},
      {"rc_mean_zero_when_calibrated", rc_calibrated},
      {"first_logit_pinning", first_logit_pinning_check},
      {"balance_equivalence", balance_check},
      {"coordinate_convexity", convexity_check},
      {"divergence_path", divergence_check},
      {"regularization_gap_scaling", regularization_gap},
  };
  auto guarded = [&opts](const char* name, Fn fn) {
    CheckResult failed;
    failed.name = name;
    try {
      return fn(opts);
    } catch (const ConvergenceFailure& e) {
      failed.error = std::string(e.what()) + "\n" + e.trace;
    } catch (const std::exception& e) {
      failed.error = e.what();
    }
    return failed;
  };
  std::vector<CheckResult> out;
  if (parallel) {
    std::vector<std::future<CheckResult>> futs;
    for (const auto& [name, fn] : checks) futs.push_back(std::async(std::launch::async, guarded, name, fn));
    for (auto& f : futs) out.push_back(f.get());
  } else {
    for (const auto& [name, fn] : checks) out.push_back(guarded(name, fn));
  }
  return out;
}

nlohmann::json to_json(const CheckResult& r) {
  nlohmann::json j = {{"name", r.name}, {"parameters", r.parameters}, {"measured", r.measured},
                      {"thresholds", r.thresholds}, {"pass", r.pass}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

nlohmann::json suite_to_json(std::span<const CheckResult> results) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    checks.push_back(to_json(r));
    all = all && r.pass;
  }
  return {{"checks", checks}, {"all_pass", all}};
}

}  // namespace oko
