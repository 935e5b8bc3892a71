#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oko/datasets.hpp"
#include "oko/losses.hpp"
#include "oko/numcore.hpp"
#include "oko/sampling.hpp"

namespace oko {

// y = W x + b with W stored row-major as out x in.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec weights;
  Vec bias;

  bool operator==(const DenseLayer&) const = default;
};

// ReLU MLP. layers.back() is the classification head; the optional aux head
// reads the same features as the classification head and is only used for
// the odd-class objective during training.
struct MlpParams {
  std::vector<DenseLayer> layers;
  std::optional<DenseLayer> aux_head;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t num_classes() const { return layers.back().out; }
  std::size_t parameter_count() const;
  MlpParams zeros_like() const;
  bool all_finite() const;

  bool operator==(const MlpParams&) const = default;
};

// He-scaled Gaussian weights (variance 2 / fan_in), zero biases.
MlpParams init_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes,
                   bool aux_head, RngStream& rng);

Vec forward_single(const MlpParams& params, std::span<const double> x);
Vec forward_set(const MlpParams& params, std::span<const Vec> members);

using MlpGrads = MlpParams;

struct BackwardResult {
  double loss = 0.0;
  MlpGrads grads;
};

// Mean loss over single examples and its parameter gradient.
BackwardResult backward_examples(const MlpParams& params, const LabeledDataset& ds,
                                 std::span<const Sample> batch, const LossSpec& loss);

// Mean OKO loss over sets (set-sum head). With an aux head the odd-class
// cross-entropy on the set-summed aux logits is added with `aux_weight`;
// that requires k == 1.
BackwardResult backward_sets(const MlpParams& params, const LabeledDataset& ds,
                             std::span<const OkoSet> sets, const LossSpec& loss,
                             double aux_weight = 1.0);

struct OptState {
  MlpParams velocity;
  std::size_t step = 0;
  std::size_t total_steps = 0;
  double base_lr = 0.1;
  double momentum = 0.9;

  static OptState for_params(const MlpParams& params, double base_lr, double momentum,
                             std::size_t total_steps);
};

// base_lr (1 + cos(pi step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

// v <- mu v + g; theta <- theta - lr_t v. Non-finite gradients throw
// NumericFault and leave params and state untouched.
void sgd_momentum_step(MlpParams& params, const MlpGrads& grads, OptState& opt);

enum class Method {
  kVanilla,
  kLabelSmoothing,
  kFocal,
  kWeighted,
  kBatchBalanced,
  kBalancedLabelSmoothing,
  kBalancedTemperature,
  kOko,
};

std::string to_string(Method m);
Method method_from_string(const std::string& name);
LossSpec default_loss_for(Method m);
bool uses_balanced_batches(Method m);

struct TrainConfig {
  Method method = Method::kVanilla;
  LossSpec loss;
  int k = 1;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool aux_odd_head = false;
  double aux_weight = 1.0;
  std::vector<std::size_t> hidden{64, 64};
  // Evaluation-time temperature; only kBalancedTemperature uses it.
  double temperature = 2.0;

  void validate() const;
  double eval_temperature() const { return method == Method::kBalancedTemperature ? temperature : 1.0; }
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
  std::size_t examples_drawn = 0;  // sets for OKO, single examples otherwise
};

struct TrainResult {
  MlpParams params;
  TrainLog log;
};

// Every epoch draws n_train examples (or n_train sets for OKO) in
// ceil(n_train / batch_size) updates.
TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg);

// softmax(forward_single(x) / temperature).
Vec predict_proba(const MlpParams& params, std::span<const double> x, double temperature = 1.0);

struct Checkpoint {
  MlpParams params;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace oko
