#include "noisyal/loss.hpp"

#include <cmath>

#include "noisyal/error.hpp"

namespace noisyal {

// exp(-z) may overflow to inf for very negative z, which still gives 0, not NaN.
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> hard_targets(const LabelSet& labels, int num_classes) {
  require(labels.within(num_classes), "label id outside [0, T)");
  std::vector<double> t(num_classes, 0.0);
  for (ClassId c : labels) t[c] = 1.0;
  return t;
}

std::vector<double> smooth_targets(const LabelSet& labels, double p, int num_classes) {
  require(labels.within(num_classes), "label id outside [0, T)");
  require(p > 0.5 && p <= 1.0, "smoothing probability must lie in (0.5, 1]");
  const auto m = static_cast<int>(labels.size());
  require(m > 0 && m < num_classes, "invalid smoothing: need 0 < |labels| < T");
  const double negative = (1.0 - p) * m / static_cast<double>(num_classes - m);
  std::vector<double> t(num_classes, negative);
  for (ClassId c : labels) t[c] = p;
  return t;
}

double bce_loss(std::span<const double> logits, std::span<const double> target,
                std::span<double> gradient) {
  require(logits.size() == target.size(), "logit/target length mismatch");
  const auto n = static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double z = logits[c];
    // log(1 + e^z) - z t, written without overflow.
    total += std::max(z, 0.0) - z * target[c] + std::log1p(std::exp(-std::abs(z)));
    if (!gradient.empty()) gradient[c] = (sigmoid(z) - target[c]) / n;
  }
  return total / n;
}

LossAndGradient bce_loss(std::span<const double> logits, std::span<const double> target) {
  LossAndGradient out;
  out.gradient.resize(logits.size());
  out.loss = bce_loss(logits, target, out.gradient);
  return out;
}

}  // namespace noisyal
