#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "noisyal/learner.hpp"

namespace noisyal {

/// Ordered learners with one nonnegative loss weight each.
struct Ensemble {
  std::vector<Learner> members;
  std::vector<double> weights;

  std::size_t size() const { return members.size(); }
  int input_dim() const { return members.front().input_dim(); }
  int num_classes() const { return members.front().num_classes(); }
  /// Throws unless |weights| == |members| > 0, weights >= 0 with one > 0,
  /// and all members share dimensions.
  void validate() const;

  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

inline constexpr std::array<int, 4> kDefaultHiddenUnits{0, 16, 32, 64};

/// One member per hidden size (0 = linear); member i gets derive_seed(seed, i).
std::vector<LearnerConfig> member_configs(std::span<const int> hidden_units, std::uint64_t seed,
                                          double init_scale = 1.0);
/// member_configs(kDefaultHiddenUnits, ...).
std::vector<LearnerConfig> default_member_configs(std::uint64_t seed, double init_scale = 1.0);

/// Members from configs with uniform weights 1/M.
Ensemble make_ensemble(std::span<const LearnerConfig> configs, int input_dim, int num_classes);

/// Weighted sum of member losses: sum_i w_i * bce(M_i(x), y).
double ensemble_loss(const Ensemble& e, std::span<const double> features,
                     std::span<const double> target);

/// Per-class maximum over members of sigmoid(logit).
std::vector<double> max_prob_output(const Ensemble& e, std::span<const double> features);

/// Unweighted mean of member logits.
std::vector<double> mean_logits(const Ensemble& e, std::span<const double> features);

/// sigmoid of the mean member logits.
std::vector<double> mean_logit_sigmoid(const Ensemble& e, std::span<const double> features);

/// Indices of the three largest probabilities; ties go to the smaller index.
/// Throws Error(kInvalidArgument) when fewer than 3 classes are given.
LabelSet top3_decision(std::span<const double> probs);

/// Confidence weighting: w_i proportional to 1 / validation_loss_i, summing to 1.
std::vector<double> confidence_weights(std::span<const double> validation_losses);

/// Trains every member against the ensemble loss. Members share no parameters,
/// so member i follows w_i * grad L_i; the step size is lr * w_i / mean(w) so
/// uniform weights reproduce the schedule's learning rates, and members with
/// w_i = 0 are left untouched. With `sample_weights`, each member draws its
/// batches from its own WeightedLoader over those weights. Parallel training
/// gives the same result as sequential.
std::vector<TrainResult> train_ensemble(Ensemble& e, const TrainingSet& data,
                                        const TrainSchedule& schedule, std::uint64_t seed,
                                        const std::vector<double>* sample_weights = nullptr,
                                        bool parallel = true);

/// Mean ensemble loss over a training set.
double mean_ensemble_loss(const Ensemble& e, const TrainingSet& data);

// Directory checkpoint: member_<i>.ckpt plus ensemble.meta listing weights and
// member hashes, itself hash-terminated.
void save_ensemble(const Ensemble& e, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);
/// Content hash covering every member and the weights.
std::string ensemble_hash(const Ensemble& e);

}  // namespace noisyal
