#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "noisyal/labels.hpp"

namespace noisyal {

using SampleId = std::int64_t;
using GroupId = std::int64_t;

enum class Provenance { kNoisyExtrapolated, kHumanCorrected, kPseudo };

std::string to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

/// One frame.
struct Sample {
  SampleId sample_id = 0;
  GroupId group_id = 0;
  std::vector<double> features;
  LabelSet assigned_labels;
  /// Synthetic ground truth; never used for training.
  LabelSet true_labels;
  Provenance provenance = Provenance::kNoisyExtrapolated;
  /// Present exactly when provenance == kPseudo.
  std::optional<std::vector<double>> soft_targets;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Immutable collection of samples with group and tool-combination indices.
class Dataset {
 public:
  Dataset() = default;
  /// Validates the sample invariants and builds the indices.
  /// Throws Error(kInvalidArgument) on dimension, label or provenance violations.
  Dataset(int num_classes, int feature_dim, std::vector<Sample> samples);

  int num_classes() const { return num_classes_; }
  int feature_dim() const { return feature_dim_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t index) const { return samples_[index]; }

  bool contains(SampleId id) const { return index_.count(id) != 0; }
  /// Throws Error(kInvalidArgument) for unknown ids.
  const Sample& by_id(SampleId id) const;
  std::size_t index_of(SampleId id) const;

  /// group id -> sample ids, in sample order.
  const std::map<GroupId, std::vector<SampleId>>& groups() const { return groups_; }
  /// Tool combination (assigned labels of the group's first frame) -> group ids.
  const std::map<LabelSet, std::vector<GroupId>>& combo_index() const { return combo_index_; }

  /// Samples with the given ids, in this dataset's order.
  Dataset subset(std::span<const SampleId> ids) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_classes_ == b.num_classes_ && a.feature_dim_ == b.feature_dim_ &&
           a.samples_ == b.samples_;
  }

 private:
  int num_classes_ = 0;
  int feature_dim_ = 0;
  std::vector<Sample> samples_;
  std::unordered_map<SampleId, std::size_t> index_;
  std::map<GroupId, std::vector<SampleId>> groups_;
  std::map<LabelSet, std::vector<GroupId>> combo_index_;
};

/// Label-extrapolation noise model for the synthetic generator.
struct NoiseSpec {
  /// Probability that a group-labelled tool is not visible in a frame.
  double p_absent = 0.25;
  /// Probability that each tool outside the group triple is visible in a frame
  /// (frames are capped at three visible tools).
  double p_spurious = 0.05;
  /// Class prior weight for rank r (1-based) is r^-imbalance_exponent.
  double imbalance_exponent = 1.3;
  int groups = 300;
  int frames_min = 20;
  int frames_max = 20;
  /// Length of each tool's signal direction.
  double signal_scale = 1.0;
  /// Per-coordinate Gaussian feature noise.
  double feature_noise = 0.5;
  /// Length of the installed-tool cue: every frame of a clip carries a second
  /// direction per clip-labelled tool, visible or not.
  double installed_cue_scale = 0.0;
};

/// Synthetic dataset with clip-level label triples extrapolated to frames.
/// Deterministic given (spec, dims, seed). Throws for T < 4, frames_min < 1,
/// groups < 2 or probabilities outside [0, 1].
Dataset generate_synthetic(const NoiseSpec& spec, int feature_dim, int num_classes,
                           std::uint64_t seed);

struct DataSplit {
  std::vector<SampleId> train_ids;
  std::vector<SampleId> test_ids;
  /// Combos present in exactly one group; those groups are split frame-wise.
  std::vector<LabelSet> singleton_combos;
};

/// Split that keeps each clip on one side, except clips whose combo is
/// unique, which are split frame-wise so every combo appears on both sides.
DataSplit group_aware_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Count of assigned labels per class.
std::vector<std::int64_t> class_distribution(const Dataset& ds);

/// Fraction of samples whose assigned labels differ from their true labels.
double noisy_fraction(const Dataset& ds);

}  // namespace noisyal
