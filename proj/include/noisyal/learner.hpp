#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisyal/sampling.hpp"

namespace noisyal {

inline constexpr int kMaxHiddenUnits = 1024;

struct LearnerConfig {
  /// 0 selects a linear model; otherwise one tanh hidden layer.
  int hidden_units = 0;
  std::uint64_t seed = 0;
  /// Weights are drawn as N(0, 1) * init_scale / sqrt(fan_in); 0 gives a zero model.
  double init_scale = 1.0;

  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

/// Small dense network mapping a feature vector to T logits.
///
/// Parameters live in one flat vector. Linear layout: W[T x d], b[T].
/// Hidden layout: W1[H x d], b1[H], W2[T x H], b2[T].
class Learner {
 public:
  Learner(const LearnerConfig& config, int input_dim, int num_classes);

  const LearnerConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Throws Error(kInvalidArgument) on a feature-dimension mismatch.
  std::vector<double> predict_logits(std::span<const double> features) const;
  void predict_logits(std::span<const double> features, std::span<double> logits) const;

  /// Backpropagates bce_loss for one example, adding d loss / d params into
  /// `gradient` (same layout as parameters()). Returns the loss.
  double accumulate_gradient(std::span<const double> features, std::span<const double> target,
                             std::span<double> gradient) const;

  bool finite() const;

  friend bool operator==(const Learner&, const Learner&) = default;

 private:
  void check_input(std::span<const double> features) const;

  LearnerConfig config_;
  int input_dim_;
  int num_classes_;
  std::vector<double> params_;
};

/// Row-major feature/target matrix used for training.
class TrainingSet {
 public:
  TrainingSet(int input_dim, int num_classes) : input_dim_(input_dim), num_classes_(num_classes) {}

  void add(std::span<const double> features, std::span<const double> target);
  std::size_t size() const { return input_dim_ ? features_.size() / input_dim_ : 0; }
  bool empty() const { return features_.empty(); }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * input_dim_, static_cast<std::size_t>(input_dim_)};
  }
  std::span<const double> target(std::size_t i) const {
    return {targets_.data() + i * num_classes_, static_cast<std::size_t>(num_classes_)};
  }

 private:
  int input_dim_;
  int num_classes_;
  std::vector<double> features_;
  std::vector<double> targets_;
};

/// Two-phase schedule: constant lr_phase1, then linear decay from
/// lr_phase2_max to lr_phase2_min across all phase-2 steps.
struct TrainSchedule {
  int phase1_epochs = 6;
  int phase2_epochs = 6;
  double lr_phase1 = 1e-2;
  double lr_phase2_max = 1e-2 / 4;
  double lr_phase2_min = 1e-2 / 400;
  int batch_size = 64;

  int total_epochs() const { return phase1_epochs + phase2_epochs; }
  void validate() const;
};

/// Adam moments (beta1 0.9, beta2 0.99, eps 1e-5).
struct OptimizerSettings {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-5;
};

struct TrainResult {
  /// Mean pre-update batch loss per epoch.
  std::vector<double> epoch_losses;
};

/// Mini-batch training. Without a loader each epoch is a seeded shuffle of the
/// data; with one, each epoch draws ceil(n / batch) batches from it. The loader
/// must cover exactly `data`. Deterministic given (data, schedule, seed, loader
/// state). Throws Error(kNumerical) when a batch loss becomes NaN or infinite.
TrainResult train(Learner& learner, const TrainingSet& data, const TrainSchedule& schedule,
                  WeightedLoader* loader, std::uint64_t seed,
                  const OptimizerSettings& optimizer = {});

// Checkpoint text: "noisyal-learner v1" header, key=value config lines, the
// parameter list, then "hash=<fnv1a64>" over everything before it.
std::string serialize_learner(const Learner& learner);
/// Throws Error(kParse) on malformed input or hash mismatch.
Learner deserialize_learner(std::string_view text);
void save_learner(const Learner& learner, const std::filesystem::path& path);
Learner load_learner(const std::filesystem::path& path);

}  // namespace noisyal
