#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "oko/numcore.hpp"

namespace oko {

// n x d row-major feature matrix with integer labels in [0, num_classes).
class LabeledDataset {
 public:
  LabeledDataset() = default;
  // Validates shapes, label range and finiteness; throws InvalidArgument.
  LabeledDataset(std::vector<double> inputs, std::vector<int> labels, std::size_t dim,
                 int num_classes);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  int num_classes() const { return num_classes_; }

  std::span<const double> row(std::size_t i) const {
    return {inputs_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<double>& inputs() const { return inputs_; }

  // Rows `indices` in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  bool operator==(const LabeledDataset&) const = default;

 private:
  std::vector<double> inputs_;
  std::vector<int> labels_;
  std::size_t dim_ = 0;
  int num_classes_ = 0;
};

// members[c] holds, in ascending order, every index i with label(i) == c.
struct ClassPartition {
  std::vector<std::vector<std::size_t>> members;

  int num_classes() const { return static_cast<int>(members.size()); }
  std::size_t total() const;
};

ClassPartition partition_by_class(const LabeledDataset& ds);

enum class DistributionKind { kUniform, kHeavyTailed };

struct DistributionSpec {
  DistributionKind kind = DistributionKind::kUniform;
  double head_mass = 0.9;
  int head_classes = 3;

  // Per-class sample counts for `total_n` points over `num_classes` classes:
  // floor of each quota, remainder handed out one by one from class 0 up.
  std::vector<std::size_t> class_quotas(std::size_t total_n, int num_classes) const;
  void validate(int num_classes) const;
};

// Isotropic unit-variance Gaussian clusters. Class c is centred at
// separation * e_c when dim >= C, otherwise on a circle of radius
// `separation` in the first two coordinates (on a line when dim == 1).
LabeledDataset make_blobs(int num_classes, std::size_t per_class, std::size_t dim,
                          double separation, RngStream& rng);

// Reads an IDX image/label file pair (big-endian, magic 0x803 / 0x801).
// Pixels are scaled to [0, 1]. Labels must be < 256; num_classes is
// 1 + the largest label present unless given explicitly.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int num_classes = 0);

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// Subsamples without replacement so that per-class counts follow `spec`.
LabeledDataset apply_distribution(const LabeledDataset& ds, const DistributionSpec& spec,
                                  std::size_t total_n, RngStream& rng);

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

// Stratified split: round(test_fraction * n_c) of each class go to test.
TrainTestSplit split_train_test(const LabeledDataset& ds, double test_fraction, RngStream& rng);

}  // namespace oko
