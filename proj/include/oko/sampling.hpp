#pragma once

#include <cstddef>
#include <vector>

#include "oko/datasets.hpp"
#include "oko/numcore.hpp"

namespace oko {

// One odd-k-out training example: two members of the pair class followed by
// one member from each of k distinct odd classes.
struct OkoSet {
  std::vector<std::size_t> indices;  // dataset rows, length k + 2
  std::vector<int> labels;           // labels[0] == labels[1] == pair_label
  int pair_label = -1;
  int k = 0;

  std::size_t size() const { return indices.size(); }
};

// Throws InvalidArgument describing the first violated OkoSet invariant.
void check_oko_set(const OkoSet& set, int num_classes);

// Draws a set: pair class uniform over [C], odd classes uniform without
// replacement from the rest, one uniform representative per odd class and a
// uniformly random ordered pair of distinct members from the pair class.
OkoSet sample_oko_set(const ClassPartition& part, int k, RngStream& rng);

struct Sample {
  std::size_t index;
  int label;
};

// Class uniform over [C], then a member uniform within the class.
std::vector<Sample> sample_balanced_batch(const ClassPartition& part, std::size_t batch_size,
                                          RngStream& rng);

// I.i.d. uniform over dataset rows, with replacement.
std::vector<Sample> sample_uniform_batch(const LabeledDataset& ds, std::size_t batch_size,
                                         RngStream& rng);

// Feature-value table for the exact set enumerator: per class, the weight
// (count or probability mass) of every feature value it contains. A feature
// value may appear in several classes.
struct FeatureWeight {
  int feature;
  double weight;
};
using ClassFeatureTable = std::vector<std::vector<FeatureWeight>>;

enum class PairDraw {
  // Population limit: the two pair members are independent draws from the
  // class's feature distribution (weights are masses, any scale).
  kIndependent,
  // Finite data: weights are integer counts and the pair is drawn as two
  // distinct rows, so P(v, w) = c_v (c_w - [v == w]) / (N (N - 1)).
  kDistinctRows,
};

struct WeightedSet {
  std::vector<int> labels;    // S_y, pair label first (twice), then odd labels in draw order
  std::vector<int> features;  // S_x as feature values, aligned with labels
  double mass = 0.0;
};

// Every (S_y, S_x) outcome of the set sampler with its exact probability.
// Rows follow the draw order: pair class, odd-class tuple, pair features,
// odd features. Throws TooLarge beyond `max_rows`.
std::vector<WeightedSet> enumerate_set_distribution(const ClassFeatureTable& table, int k,
                                                    PairDraw mode = PairDraw::kIndependent,
                                                    std::size_t max_rows = 1'000'000);

}  // namespace oko
