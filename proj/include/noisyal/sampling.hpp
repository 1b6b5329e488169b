#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "noisyal/dataset.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

/// Inverse-frequency class weights w_c = N / (T * max(count_c, 1)),
/// N being the total label count.
std::vector<double> compute_class_weights(std::span<const std::int64_t> counts);
std::vector<double> compute_class_weights(const Dataset& ds);

enum class WeightReduction { kMean, kMax };

/// Per-sample weight from its labels' class weights; 1.0 for an empty set.
double sample_weight(const LabelSet& labels, std::span<const double> class_weights,
                     WeightReduction reduction = WeightReduction::kMean);

/// Draws sample indices with replacement, with probability proportional to
/// the per-sample weights. Owns its RNG stream; not thread-safe.
class WeightedLoader {
 public:
  WeightedLoader(std::vector<double> sample_weights, int batch_size, std::uint64_t rng_seed);

  std::size_t size() const { return weights_.size(); }
  int batch_size() const { return batch_size_; }
  const std::vector<double>& weights() const { return weights_; }

  std::size_t draw_index();
  std::vector<std::size_t> draw_batch();
  std::vector<std::size_t> draw_batch(std::size_t count);

 private:
  std::vector<double> weights_;
  // Cumulative weights normalized by the total; last entry is 1.
  std::vector<double> cumulative_;
  int batch_size_;
  Rng rng_;
};

/// Loader over `ds` with weights from the given class weights.
WeightedLoader make_weighted_loader(const Dataset& ds, std::span<const double> class_weights,
                                    int batch_size, std::uint64_t rng_seed,
                                    WeightReduction reduction = WeightReduction::kMean);

/// A batch of samples drawn from `ds` (ds.size() must equal loader.size()).
std::vector<const Sample*> draw_batch(WeightedLoader& loader, const Dataset& ds);

}  // namespace noisyal
