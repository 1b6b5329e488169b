#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisyal/dataset.hpp"
#include "noisyal/ensemble.hpp"
#include "noisyal/metrics.hpp"
#include "noisyal/sampling.hpp"

namespace noisyal {

enum class PseudoTargetMode { kSoft, kHardTop3 };

/// Student-stage options. Smoothing and weighted loading only ever touch the
/// student; the teacher always trains on hard clean targets.
struct StageConfig {
  bool use_label_smoothing = false;
  double smoothing_p = 0.9;
  bool use_weighted_loader = false;
  WeightReduction reduction = WeightReduction::kMean;
  PseudoTargetMode pseudo_mode = PseudoTargetMode::kSoft;
  /// Start student members from the teacher's parameters.
  bool warm_start = false;
  TrainSchedule schedule;
  /// Fine-tuning phase appended to student training. Its batches come from a
  /// loader: inverse-frequency weights with WDL, uniform weights without.
  int finetune_epochs = 3;
  double finetune_lr = 1e-2 / 4;
  int finetune_batch = 64;

  void validate() const;
};

struct TeacherResult {
  Ensemble ensemble;
  EvaluationReport validation;
  std::vector<TrainResult> traces;
};

/// Trains an ensemble on hard targets of the clean training split and evaluates
/// it (top-3 rule) on the clean validation split. Members start fresh from
/// `members`, or from `init` (e.g. the label-cleaning ensemble) when given.
TeacherResult train_teacher(const StageConfig& cfg, const Dataset& clean_train,
                            const Dataset& clean_validation,
                            std::span<const LearnerConfig> members, std::uint64_t seed,
                            const Ensemble* init = nullptr);

/// Relabels `unclean` with soft targets sigmoid(mean teacher logits); output
/// samples carry provenance pseudo and keep their ids and features.
Dataset pseudo_label(const Ensemble& teacher, const Dataset& unclean);

struct StudentResult {
  Ensemble ensemble;
  std::vector<TrainResult> traces;
  std::vector<TrainResult> finetune_traces;
  /// Class weights used by the fine-tuning loader.
  std::vector<double> class_weights;
};

/// Training targets for the student: pseudo samples use their soft targets (or
/// hard top-3 of them), clean samples hard or smoothed labels.
TrainingSet student_training_set(const StageConfig& cfg, const Dataset& pseudo,
                                 const Dataset& clean_train);

/// Label sets used for student class counting: top-3 of soft targets for pseudo
/// samples, assigned labels otherwise.
std::vector<LabelSet> student_label_sets(const Dataset& pseudo, const Dataset& clean_train);

/// Trains the student on pseudo ∪ clean_train, then runs the fine-tuning phase.
/// `teacher` is required when cfg.warm_start is set.
StudentResult train_student(const StageConfig& cfg, const Dataset& pseudo,
                            const Dataset& clean_train, std::span<const LearnerConfig> members,
                            const Ensemble* teacher, std::uint64_t seed);

/// top-3 of sigmoid(mean member logits).
LabelSet predict(const Ensemble& e, std::span<const double> features);

std::vector<LabelSet> predict_all(const Ensemble& e, const Dataset& ds);

enum class EvalTarget { kTrueLabels, kAssignedLabels };

/// Evaluates top-3 predictions against true or assigned labels and records the
/// mean ensemble loss against the same labels.
EvaluationReport evaluate_ensemble(const Ensemble& e, const Dataset& ds, EvalTarget target,
                                   std::string stage);

}  // namespace noisyal
