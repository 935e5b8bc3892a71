#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oko/numcore.hpp"

namespace oko {

// Confidence interval the bins cover. Top-label confidences of a C-class
// model live in [1/C, 1], so binary problems may bin over [0.5, 1].
struct ConfidenceRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_conf = 0.0;  // 0 for an empty bin
  double accuracy = 0.0;   // 0 for an empty bin

  bool operator==(const ReliabilityBin&) const = default;
};

using ReliabilityBins = std::vector<ReliabilityBin>;

// M equal-width bins over `range`; bin b is [lo_b, hi_b) except the last,
// which is closed. Confidences outside the range raise InvalidArgument.
ReliabilityBins bin_confidences(std::span<const double> confidences, std::span<const int> correct,
                                std::size_t M = 10, ConfidenceRange range = {});

// Sum over bins of (n_b / n) |acc_b - conf_b|; empty bins contribute 0.
double ece_from_bins(const ReliabilityBins& bins);

double ece(std::span<const double> confidences, std::span<const int> correct, std::size_t M = 10,
           ConfidenceRange range = {});

// Top-label reliability bins: confidence max_c q_c, correct iff argmax q == y.
ReliabilityBins reliability_bins(std::span<const Vec> probs, std::span<const int> labels,
                                 std::size_t M = 10, ConfidenceRange range = {});

// One-vs-all variant: every (sample, class) pair contributes confidence q_c
// with outcome [y == c].
double ece_one_vs_all(std::span<const Vec> probs, std::span<const int> labels, std::size_t M = 10);

void write_bins_csv(const std::filesystem::path& path, const ReliabilityBins& bins);
ReliabilityBins read_bins_csv(const std::filesystem::path& path);

// -log q_y - H(q); +infinity when q_y == 0.
double rc(int y, std::span<const double> q);

struct RcStats {
  double mean = 0.0;  // over finite values only
  double std_error = 0.0;
  std::size_t n_finite = 0;
  std::size_t n_infinite = 0;
};

RcStats rc_stats(std::span<const Vec> probs, std::span<const int> labels);
double mean_rc(std::span<const Vec> probs, std::span<const int> labels);

struct EntropyPartition {
  std::vector<double> correct;
  std::vector<double> incorrect;
};

// Split predictive entropies by whether argmax q (lowest index on ties) hits y.
EntropyPartition entropy_partition(std::span<const Vec> probs, std::span<const int> labels);

// softmax(z / tau).
Vec temperature_scale(std::span<const double> z, double tau);

struct XentEntropyMeans {
  double mean_xent = 0.0;     // mean of H(e_y, q)
  double mean_entropy = 0.0;  // mean of H(q)
};

// Mean over settings of |mean_xent - mean_entropy|.
double mae_entropy_vs_xent(std::span<const XentEntropyMeans> settings);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
};

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

struct CalibrationReport {
  std::size_t n = 0;
  int num_classes = 0;
  double accuracy = 0.0;
  std::size_t ece_bins = 10;
  double ece = 0.0;
  double ece_one_vs_all = 0.0;
  double brier = 0.0;  // mean over samples
  // RC, cross-entropy and entropy means share the finite-RC subset, so
  // mean_rc == mean_xent - mean_entropy.
  double mean_rc = 0.0;
  double rc_std_error = 0.0;
  std::size_t rc_infinite = 0;
  double mean_xent = 0.0;
  double mean_entropy = 0.0;
  double xent_entropy_gap = 0.0;  // |mean_xent - mean_entropy|
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  double mean_entropy_correct = 0.0;
  double mean_entropy_incorrect = 0.0;
  Histogram entropy_hist_correct;
  Histogram entropy_hist_incorrect;
  ReliabilityBins bins;
  std::vector<std::size_t> per_class_count;
  std::vector<double> per_class_accuracy;  // 0 where per_class_count is 0

  XentEntropyMeans means() const { return {mean_xent, mean_entropy}; }
};

CalibrationReport evaluate(std::span<const Vec> probs, std::span<const int> labels,
                           std::size_t M = 10, std::size_t entropy_bins = 20);

std::string report_to_json(const CalibrationReport& r);
CalibrationReport report_from_json(const std::string& text);

}  // namespace oko
