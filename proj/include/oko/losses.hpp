#pragma once

#include <span>
#include <string>
#include <vector>

#include "oko/numcore.hpp"

namespace oko {

// Loss value together with its gradient with respect to the logits.
struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

enum class LossKind { kVanilla, kWeighted, kLabelSmoothing, kFocal, kOkoHard, kOkoSoft };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct LossSpec {
  LossKind kind = LossKind::kVanilla;
  double smoothing = 0.1;    // alpha, label smoothing only
  double focal_gamma = 2.0;  // gamma, focal only
  // Weighted only: per-class training counts n_c, and the scale a.
  // A non-positive scale means "use n / C".
  std::vector<double> class_counts;
  double weight_scale = 0.0;

  void validate() const;
  bool is_set_loss() const { return kind == LossKind::kOkoHard || kind == LossKind::kOkoSoft; }
};

LossGrad vanilla_ce(std::span<const double> z, int y);

// (a / n_y) * vanilla_ce. Throws on a non-positive count.
LossGrad weighted_ce(std::span<const double> z, int y, std::span<const double> class_counts,
                     double scale);

// Cross-entropy against e_y (1 - alpha) + alpha / C.
LossGrad smoothed_ce(std::span<const double> z, int y, double alpha);

// -(1 - p_y)^gamma log p_y.
LossGrad focal(std::span<const double> z, int y, double gamma);

// Elementwise sum of per-member logits.
Vec set_logit_sum(std::span<const Vec> member_logits);

// Cross-entropy of softmax(set_logits) against the pair class.
LossGrad oko_hard(std::span<const double> set_logits, int pair_label);

// Cross-entropy against the empirical label proportions of the set.
LossGrad oko_soft(std::span<const double> set_logits, std::span<const int> set_labels);

// Cross-entropy H(t, softmax(z)) for an arbitrary target t with gradient
// (sum t) softmax(z) - t. Shared by every loss above.
LossGrad soft_target_ce(std::span<const double> z, std::span<const double> target);

// Single-example dispatch for the non-set kinds.
LossGrad evaluate_example_loss(const LossSpec& spec, std::span<const double> z, int y);

}  // namespace oko
