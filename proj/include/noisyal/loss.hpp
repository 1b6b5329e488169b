#pragma once

#include <span>
#include <vector>

#include "noisyal/labels.hpp"

namespace noisyal {

/// Logistic function, stable for large |z|.
double sigmoid(double z);

/// 0/1 multi-label target: t_c = 1 iff c is in labels.
std::vector<double> hard_targets(const LabelSet& labels, int num_classes);

/// Smoothed multi-label target with m = |labels| positives:
///   t_c = p                 for c in labels
///   t_c = (1 - p) m / (T - m)  otherwise,
/// so the target mass equals m. Requires 0.5 < p <= 1 and 0 < m < T;
/// otherwise throws Error(kInvalidArgument).
std::vector<double> smooth_targets(const LabelSet& labels, double p, int num_classes);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Mean per-class binary cross-entropy on sigmoided logits.
/// Gradient w.r.t. logit c is (sigmoid(z_c) - t_c) / T.
LossAndGradient bce_loss(std::span<const double> logits, std::span<const double> target);

/// Loss only; writes the gradient into `gradient` when it is non-empty.
double bce_loss(std::span<const double> logits, std::span<const double> target,
                std::span<double> gradient);

}  // namespace noisyal
