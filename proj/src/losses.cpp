#include "oko/losses.hpp"

#include <cmath>

#include "oko/errors.hpp"

namespace oko {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kVanilla: return "vanilla";
    case LossKind::kWeighted: return "weighted";
    case LossKind::kLabelSmoothing: return "label_smoothing";
    case LossKind::kFocal: return "focal";
    case LossKind::kOkoHard: return "oko_hard";
    case LossKind::kOkoSoft: return "oko_soft";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  for (auto k : {LossKind::kVanilla, LossKind::kWeighted, LossKind::kLabelSmoothing,
                 LossKind::kFocal, LossKind::kOkoHard, LossKind::kOkoSoft}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown loss kind: " + name);
}

void LossSpec::validate() const {
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidArgument("smoothing must lie in [0, 1)");
  if (!(focal_gamma >= 0.0)) throw InvalidArgument("focal gamma must be >= 0");
  if (kind == LossKind::kWeighted) {
    if (class_counts.empty()) throw InvalidArgument("weighted loss needs class counts");
    for (double n : class_counts) {
      if (!(n > 0.0)) throw InvalidArgument("weighted loss class counts must be positive");
    }
  }
}

namespace {

void check_label(std::span<const double> z, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= z.size())
    throw InvalidArgument("label out of range for logits of width " + std::to_string(z.size()));
}

}  // namespace

LossGrad soft_target_ce(std::span<const double> z, std::span<const double> target) {
  if (z.size() != target.size()) throw InvalidArgument("target width does not match logits");
  const Vec logp = log_softmax(z);
  LossGrad out;
  out.grad.resize(z.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (target[i] != 0.0) out.loss -= target[i] * logp[i];
    mass += target[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) out.grad[i] = mass * std::exp(logp[i]) - target[i];
  return out;
}

LossGrad vanilla_ce(std::span<const double> z, int y) {
  check_label(z, y);
  Vec t(z.size(), 0.0);
  t[static_cast<std::size_t>(y)] = 1.0;
  return soft_target_ce(z, t);
}

LossGrad weighted_ce(std::span<const double> z, int y, std::span<const double> class_counts,
                     double scale) {
  check_label(z, y);
  if (class_counts.size() != z.size()) throw InvalidArgument("one class count per logit required");
  const double n_y = class_counts[static_cast<std::size_t>(y)];
  if (!(n_y > 0.0)) throw InvalidArgument("class count must be positive");
  LossGrad out = vanilla_ce(z, y);
  const double w = scale / n_y;
  out.loss *= w;
  for (double& g : out.grad) g *= w;
  return out;
}

LossGrad smoothed_ce(std::span<const double> z, int y, double alpha) {
  check_label(z, y);
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("smoothing must lie in [0, 1)");
  const double C = static_cast<double>(z.size());
  Vec t(z.size(), alpha / C);
  t[static_cast<std::size_t>(y)] += 1.0 - alpha;
  return soft_target_ce(z, t);
}

LossGrad focal(std::span<const double> z, int y, double gamma) {
  check_label(z, y);
  if (!(gamma >= 0.0)) throw InvalidArgument("focal gamma must be >= 0");
  const auto uy = static_cast<std::size_t>(y);
  const Vec logp = log_softmax(z);
  const Vec p = softmax(z);
  const double log_py = logp[uy];
  const double py = p[uy];
  // 1 - p_y as the sum of the other probabilities keeps precision near p_y = 1.
  double rest = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != uy) rest += p[i];
  }
  const double mod = gamma == 0.0 ? 1.0 : std::pow(rest, gamma);
  LossGrad out;
  out.loss = -mod * log_py;
  // dL/dp_y * p_y, with dp_y/dz_j = p_y (delta_jy - p_j).
  double dmod = 0.0;  // gamma (1 - p)^(gamma - 1) log p * p
  if (gamma > 0.0 && rest > 0.0) dmod = gamma * std::pow(rest, gamma - 1.0) * log_py * py;
  const double scale = dmod - mod;
  out.grad.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out.grad[j] = scale * ((j == uy ? 1.0 : 0.0) - p[j]);
  return out;
}

Vec set_logit_sum(std::span<const Vec> member_logits) {
  if (member_logits.empty()) throw InvalidArgument("set_logit_sum: empty set");
  Vec sum(member_logits.front().size(), 0.0);
  for (const auto& z : member_logits) {
    if (z.size() != sum.size()) throw InvalidArgument("set_logit_sum: ragged logits");
    for (std::size_t i = 0; i < z.size(); ++i) sum[i] += z[i];
  }
  return sum;
}

LossGrad oko_hard(std::span<const double> set_logits, int pair_label) {
  return vanilla_ce(set_logits, pair_label);
}

LossGrad oko_soft(std::span<const double> set_logits, std::span<const int> set_labels) {
  if (set_labels.empty()) throw InvalidArgument("oko_soft: empty label set");
  Vec t(set_logits.size(), 0.0);
  const double w = 1.0 / static_cast<double>(set_labels.size());
  for (int y : set_labels) {
    check_label(set_logits, y);
    t[static_cast<std::size_t>(y)] += w;
  }
  return soft_target_ce(set_logits, t);
}

LossGrad evaluate_example_loss(const LossSpec& spec, std::span<const double> z, int y) {
  switch (spec.kind) {
    case LossKind::kVanilla: return vanilla_ce(z, y);
    case LossKind::kWeighted: {
      double scale = spec.weight_scale;
      if (!(scale > 0.0)) {
        double n = 0.0;
        for (double c : spec.class_counts) n += c;
        scale = n / static_cast<double>(spec.class_counts.size());
      }
      return weighted_ce(z, y, spec.class_counts, scale);
    }
    case LossKind::kLabelSmoothing: return smoothed_ce(z, y, spec.smoothing);
    case LossKind::kFocal: return focal(z, y, spec.focal_gamma);
    case LossKind::kOkoHard:
    case LossKind::kOkoSoft: break;
  }
  throw InvalidArgument("set losses need a set, not a single example");
}

}  // namespace oko
