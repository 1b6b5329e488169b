#include "noisyal/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisyal/error.hpp"

namespace noisyal {

std::vector<double> compute_class_weights(std::span<const std::int64_t> counts) {
  for (std::int64_t count : counts) require(count >= 0, "class counts must be nonnegative");
  const auto total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  const auto num_classes = static_cast<double>(counts.size());
  std::vector<double> weights;
  weights.reserve(counts.size());
  for (std::int64_t count : counts)
    weights.push_back(static_cast<double>(total) /
                      (num_classes * static_cast<double>(std::max<std::int64_t>(count, 1))));
  return weights;
}

std::vector<double> compute_class_weights(const Dataset& ds) {
  return compute_class_weights(class_distribution(ds));
}

double sample_weight(const LabelSet& labels, std::span<const double> class_weights,
                     WeightReduction reduction) {
  if (labels.empty()) return 1.0;
  require(labels.within(static_cast<int>(class_weights.size())), "label outside class weights");
  if (reduction == WeightReduction::kMax) {
    double best = 0.0;
    for (ClassId c : labels) best = std::max(best, class_weights[c]);
    return best;
  }
  double sum = 0.0;
  for (ClassId c : labels) sum += class_weights[c];
  return sum / static_cast<double>(labels.size());
}

WeightedLoader::WeightedLoader(std::vector<double> sample_weights, int batch_size,
                               std::uint64_t rng_seed)
    : weights_(std::move(sample_weights)), batch_size_(batch_size), rng_(rng_seed) {
  require(batch_size >= 1, "batch size must be at least 1");
  require(!weights_.empty(), "weighted loader needs at least one sample");
  double total = 0.0;
  for (double w : weights_) {
    require(std::isfinite(w) && w > 0.0, "sample weights must be finite and positive");
    total += w;
  }
  cumulative_.reserve(weights_.size());
  double running = 0.0;
  for (double w : weights_) {
    running += w;
    cumulative_.push_back(running / total);
  }
  cumulative_.back() = 1.0;
}

std::size_t WeightedLoader::draw_index() {
  const double u = uniform01(rng_);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(
      it - cumulative_.begin(), static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
}

std::vector<std::size_t> WeightedLoader::draw_batch() {
  return draw_batch(static_cast<std::size_t>(batch_size_));
}

std::vector<std::size_t> WeightedLoader::draw_batch(std::size_t count) {
  std::vector<std::size_t> out(count);
  for (auto& idx : out) idx = draw_index();
  return out;
}

WeightedLoader make_weighted_loader(const Dataset& ds, std::span<const double> class_weights,
                                    int batch_size, std::uint64_t rng_seed,
                                    WeightReduction reduction) {
  std::vector<double> weights;
  weights.reserve(ds.size());
  for (const Sample& s : ds.samples())
    weights.push_back(sample_weight(s.assigned_labels, class_weights, reduction));
  return WeightedLoader(std::move(weights), batch_size, rng_seed);
}

std::vector<const Sample*> draw_batch(WeightedLoader& loader, const Dataset& ds) {
  require(loader.size() == ds.size(), "loader/dataset size mismatch");
  std::vector<const Sample*> out;
  for (std::size_t idx : loader.draw_batch()) out.push_back(&ds[idx]);
  return out;
}

}  // namespace noisyal
