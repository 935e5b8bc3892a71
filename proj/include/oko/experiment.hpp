#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oko/calibration.hpp"
#include "oko/datasets.hpp"
#include "oko/losses.hpp"
#include "oko/model.hpp"

namespace oko {

struct BlobSource {
  int num_classes = 10;
  std::size_t dim = 16;
  double separation = 3.0;
  std::size_t pool_per_class = 500;  // points per class before the split
};

struct IdxSource {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  // Official test files; when absent the test split comes from the train files.
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  int num_classes = 0;  // 0: infer from the labels
};

struct OptimizerSettings {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<std::size_t> hidden{64, 64};
};

struct ExperimentConfig {
  std::optional<BlobSource> blobs;
  std::optional<IdxSource> idx;
  DistributionSpec distribution;
  std::vector<Method> methods;
  std::map<Method, LossSpec> losses;  // defaults merged with per-method overrides
  int k = 1;
  bool aux_odd_head = false;
  double aux_weight = 1.0;
  double temperature = 2.0;
  std::vector<std::size_t> train_sizes;
  std::vector<std::uint64_t> seeds;
  OptimizerSettings optimizer;
  double test_fraction = 0.2;
  std::size_t ece_bins = 10;
  std::filesystem::path output_dir = "runs";

  int num_classes() const;
  TrainConfig train_config(Method m, std::uint64_t seed) const;
};

// Strict parse: unknown keys, wrong types and invalid values are all
// collected and thrown together as a ValidationError. Relative paths are
// resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical form with every default filled in; keys come out sorted.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// FNV-1a of the canonical dump without output_dir, so reordering fields,
// spelling out defaults or moving the output leave it unchanged.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

struct PreparedData {
  LabeledDataset train_pool;
  LabeledDataset test;
};

// Test split is drawn from a stream keyed by the config hash, so every run
// of a config sees the same test set.
PreparedData prepare_data(const ExperimentConfig& cfg);

struct RunRecord {
  std::string config_hash;
  Method method = Method::kVanilla;
  std::size_t train_size = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<std::size_t> train_class_counts;
  double final_train_loss = 0.0;
  std::size_t steps = 0;
  CalibrationReport report;
  double wall_clock_seconds = 0.0;
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
std::string record_stem(const RunRecord& r);  // "<method>_n<size>_s<seed>"

// Train and evaluate one (method, size, seed) cell. Failures are captured
// in the record rather than thrown.
RunRecord execute_run(const ExperimentConfig& cfg, const PreparedData& data, Method method,
                      std::size_t train_size, std::uint64_t seed);

struct TrainSummary {
  std::vector<RunRecord> records;  // roster order: method, size, seed
  std::size_t failed = 0;
};

// Runs the full grid on up to `workers` threads and writes
// <output_dir>/<stem>.json and <stem>.bins.csv per run.
TrainSummary run_experiment(const ExperimentConfig& cfg, std::size_t workers, std::ostream& log);

struct MethodSummary {
  Method method = Method::kVanilla;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double mean_ece = 0.0;
  double mae_xent_entropy = 0.0;
  double mean_brier = 0.0;
  double mean_rc = 0.0;
  double mean_entropy_incorrect = 0.0;
};

struct ReportResult {
  std::vector<MethodSummary> rows;
  std::vector<std::string> skipped;  // malformed files
  std::size_t failed_runs = 0;
};

// Reads every RunRecord JSON in `dir` and writes summary.csv and long.csv
// there. Throws InvalidArgument when no usable record exists.
ReportResult build_report(const std::filesystem::path& dir, std::ostream& log);

}  // namespace oko
