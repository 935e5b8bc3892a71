#include "oko/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "oko/errors.hpp"

namespace oko {

void check_oko_set(const OkoSet& set, int num_classes) {
  const auto n = static_cast<std::size_t>(set.k + 2);
  if (set.k < 0 || set.indices.size() != n || set.labels.size() != n)
    throw InvalidArgument("OKO set must hold k + 2 members");
  if (set.k + 1 > num_classes) throw InvalidArgument("OKO set needs k + 1 <= C");
  if (set.labels[0] != set.pair_label || set.labels[1] != set.pair_label)
    throw InvalidArgument("first two members must carry the pair label");
  if (set.indices[0] == set.indices[1]) throw InvalidArgument("pair members must be distinct rows");
  for (std::size_t i = 2; i < n; ++i) {
    if (set.labels[i] == set.pair_label) throw InvalidArgument("odd class equals the pair class");
    for (std::size_t j = 2; j < i; ++j) {
      if (set.labels[i] == set.labels[j]) throw InvalidArgument("odd classes must be distinct");
    }
  }
}

OkoSet sample_oko_set(const ClassPartition& part, int k, RngStream& rng) {
  const int C = part.num_classes();
  if (k < 0) throw InvalidArgument("k must be non-negative");
  if (k + 1 > C) throw SamplingInfeasible("need k + 1 <= C (k=" + std::to_string(k) + ", C=" + std::to_string(C) + ")");
  for (int c = 0; c < C; ++c) {
    if (part.members[static_cast<std::size_t>(c)].empty())
      throw SamplingInfeasible("class " + std::to_string(c) + " has no members");
  }
  OkoSet set;
  set.k = k;
  set.pair_label = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(C)));
  const auto& pair_pool = part.members[static_cast<std::size_t>(set.pair_label)];
  if (pair_pool.size() < 2)
    throw SamplingInfeasible("pair class " + std::to_string(set.pair_label) +
                             " has fewer than two members");

  // Ordered pair of distinct rows: first uniform, second uniform over the rest.
  const std::size_t a = rng.uniform_index(pair_pool.size());
  std::size_t b = rng.uniform_index(pair_pool.size() - 1);
  if (b >= a) ++b;
  set.indices = {pair_pool[a], pair_pool[b]};
  set.labels = {set.pair_label, set.pair_label};

  // Odd classes: partial Fisher-Yates over [C] \ {y'}.
  std::vector<int> others;
  others.reserve(static_cast<std::size_t>(C - 1));
  for (int c = 0; c < C; ++c) {
    if (c != set.pair_label) others.push_back(c);
  }
  for (int i = 0; i < k; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::size_t j = ui + rng.uniform_index(others.size() - ui);
    std::swap(others[ui], others[j]);
    const int odd = others[ui];
    const auto& pool = part.members[static_cast<std::size_t>(odd)];
    set.indices.push_back(pool[rng.uniform_index(pool.size())]);
    set.labels.push_back(odd);
  }
  return set;
}

std::vector<Sample> sample_balanced_batch(const ClassPartition& part, std::size_t batch_size,
                                          RngStream& rng) {
  const int C = part.num_classes();
  if (C < 1) throw SamplingInfeasible("no classes to balance over");
  for (int c = 0; c < C; ++c) {
    if (part.members[static_cast<std::size_t>(c)].empty())
      throw SamplingInfeasible("class " + std::to_string(c) + " has no members");
  }
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t c = rng.uniform_index(static_cast<std::size_t>(C));
    const auto& pool = part.members[c];
    batch.push_back({pool[rng.uniform_index(pool.size())], static_cast<int>(c)});
  }
  return batch;
}

std::vector<Sample> sample_uniform_batch(const LabeledDataset& ds, std::size_t batch_size,
                                         RngStream& rng) {
  if (ds.size() == 0) throw InvalidArgument("cannot sample from an empty dataset");
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t idx = rng.uniform_index(ds.size());
    batch.push_back({idx, ds.label(idx)});
  }
  return batch;
}

namespace {

struct Choice {
  int feature;
  double prob;
};

struct PairChoice {
  int first;
  int second;
  double prob;
};

double class_total(const std::vector<FeatureWeight>& row) {
  double t = 0.0;
  for (const auto& fw : row) {
    if (fw.weight < 0.0) throw InvalidArgument("feature weights must be non-negative");
    t += fw.weight;
  }
  return t;
}

std::vector<Choice> single_draws(const std::vector<FeatureWeight>& row) {
  const double total = class_total(row);
  std::vector<Choice> out;
  out.reserve(row.size());
  for (const auto& fw : row) out.push_back({fw.feature, fw.weight / total});
  return out;
}

std::vector<PairChoice> pair_draws(const std::vector<FeatureWeight>& row, PairDraw mode) {
  const double total = class_total(row);
  std::vector<PairChoice> out;
  out.reserve(row.size() * row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      double p = 0.0;
      if (mode == PairDraw::kIndependent) {
        p = (row[i].weight / total) * (row[j].weight / total);
      } else {
        const double second = row[j].weight - (i == j ? 1.0 : 0.0);
        p = row[i].weight * std::max(second, 0.0) / (total * (total - 1.0));
      }
      out.push_back({row[i].feature, row[j].feature, p});
    }
  }
  return out;
}

// All ordered k-tuples of distinct entries from `pool`.
void ordered_tuples(const std::vector<int>& pool, int k, std::vector<int>& current,
                    std::vector<bool>& used, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == k) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    current.push_back(pool[i]);
    ordered_tuples(pool, k, current, used, out);
    current.pop_back();
    used[i] = false;
  }
}

}  // namespace

std::vector<WeightedSet> enumerate_set_distribution(const ClassFeatureTable& table, int k,
                                                    PairDraw mode, std::size_t max_rows) {
  const int C = static_cast<int>(table.size());
  if (k < 0 || k + 1 > C) throw InvalidArgument("enumeration needs 0 <= k and k + 1 <= C");
  for (int c = 0; c < C; ++c) {
    const double t = class_total(table[static_cast<std::size_t>(c)]);
    if (!(t > 0.0)) throw SamplingInfeasible("class " + std::to_string(c) + " has zero weight");
    if (mode == PairDraw::kDistinctRows && t < 2.0)
      throw SamplingInfeasible("class " + std::to_string(c) + " has fewer than two rows");
  }

  std::vector<std::vector<std::vector<int>>> odd_tuples(static_cast<std::size_t>(C));
  double row_count = 0.0;
  for (int y = 0; y < C; ++y) {
    std::vector<int> others;
    for (int c = 0; c < C; ++c) {
      if (c != y) others.push_back(c);
    }
    std::vector<int> cur;
    std::vector<bool> used(others.size(), false);
    auto& tuples = odd_tuples[static_cast<std::size_t>(y)];
    ordered_tuples(others, k, cur, used, tuples);
    const double pair_rows = static_cast<double>(table[static_cast<std::size_t>(y)].size());
    for (const auto& t : tuples) {
      double r = pair_rows * pair_rows;
      for (int c : t) r *= static_cast<double>(table[static_cast<std::size_t>(c)].size());
      row_count += r;
    }
  }
  if (row_count > static_cast<double>(max_rows))
    throw TooLarge("set enumeration needs " + std::to_string(static_cast<long long>(row_count)) +
                   " rows, budget is " + std::to_string(max_rows));

  std::vector<std::vector<Choice>> singles(static_cast<std::size_t>(C));
  std::vector<std::vector<PairChoice>> pairs(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    singles[static_cast<std::size_t>(c)] = single_draws(table[static_cast<std::size_t>(c)]);
    pairs[static_cast<std::size_t>(c)] = pair_draws(table[static_cast<std::size_t>(c)], mode);
  }

  std::vector<WeightedSet> rows;
  rows.reserve(static_cast<std::size_t>(row_count));
  const double p_pair_class = 1.0 / static_cast<double>(C);
  double p_tuple = 1.0;
  for (int i = 0; i < k; ++i) p_tuple /= static_cast<double>(C - 1 - i);

  for (int y = 0; y < C; ++y) {
    for (const auto& tuple : odd_tuples[static_cast<std::size_t>(y)]) {
      std::vector<int> labels{y, y};
      labels.insert(labels.end(), tuple.begin(), tuple.end());
      for (const auto& pc : pairs[static_cast<std::size_t>(y)]) {
        // Odometer over the odd members' feature choices.
        std::vector<std::size_t> pos(static_cast<std::size_t>(k), 0);
        while (true) {
          WeightedSet ws;
          ws.labels = labels;
          ws.features = {pc.first, pc.second};
          ws.mass = p_pair_class * p_tuple * pc.prob;
          for (int i = 0; i < k; ++i) {
            const auto& ch = singles[static_cast<std::size_t>(tuple[static_cast<std::size_t>(i)])]
                                    [pos[static_cast<std::size_t>(i)]];
            ws.features.push_back(ch.feature);
            ws.mass *= ch.prob;
          }
          rows.push_back(std::move(ws));
          int d = k - 1;
          while (d >= 0) {
            const auto ud = static_cast<std::size_t>(d);
            const auto lim = singles[static_cast<std::size_t>(tuple[ud])].size();
            if (++pos[ud] < lim) break;
            pos[ud] = 0;
            --d;
          }
          if (d < 0) break;
        }
      }
    }
  }
  return rows;
}

}  // namespace oko
