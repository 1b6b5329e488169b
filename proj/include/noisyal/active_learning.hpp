#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "noisyal/dataset.hpp"
#include "noisyal/ensemble.hpp"

namespace noisyal {

/// Ensemble loss of a sample against its current assigned labels.
struct EpistemicScore {
  SampleId sample_id = 0;
  double score = 0.0;
};

/// One score per sample of `ds` not in `exclude`, in dataset order.
std::vector<EpistemicScore> score_samples(const Ensemble& e, const Dataset& ds,
                                          const std::set<SampleId>& exclude);

/// Ids of the k largest scores, ordered by score descending, ties by smaller id.
/// Throws Error(kInvalidArgument) when k exceeds the number of scores.
std::vector<SampleId> select_topk(std::span<const EpistemicScore> scores, std::size_t k);

struct AnnotationItem {
  SampleId sample_id = 0;
  LabelSet current_labels;
  /// Per-class maximum member probability.
  std::vector<double> max_probs;
  /// Top-3 of max_probs.
  LabelSet suggested;
  double score = 0.0;
};

AnnotationItem make_annotation_item(const Ensemble& e, const Sample& sample, double score);

struct AnnotationRecord {
  SampleId sample_id = 0;
  LabelSet previous_labels;
  LabelSet corrected_labels;
  /// corrected_labels != previous_labels.
  bool changed = false;
  std::string annotator_id;
  int iteration_index = 0;
  /// UTC seconds.
  std::int64_t timestamp = 0;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

std::string record_to_json_line(const AnnotationRecord& record);
AnnotationRecord record_from_json_line(std::string_view line);
/// Appends one newline-terminated record.
void append_audit_record(const std::filesystem::path& path, const AnnotationRecord& record);
std::vector<AnnotationRecord> read_audit_log(const std::filesystem::path& path);
std::string format_audit_log(std::span<const AnnotationRecord> records);

/// Source of corrected labels. A nullopt answer means the oracle timed out.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string id() const = 0;
  virtual std::optional<LabelSet> annotate(const AnnotationItem& item, const Sample& sample) = 0;
};

/// Answers with the sample's synthetic ground truth.
class ScriptedOracle : public Oracle {
 public:
  std::string id() const override { return "scripted"; }
  std::optional<LabelSet> annotate(const AnnotationItem&, const Sample& sample) override {
    return sample.true_labels;
  }
};

/// Ground truth with one class toggled at the given rate (cardinality kept <= 3).
class NoisyOracle : public Oracle {
 public:
  NoisyOracle(double flip_rate, int num_classes, std::uint64_t seed);
  std::string id() const override { return "noisy"; }
  std::optional<LabelSet> annotate(const AnnotationItem& item, const Sample& sample) override;

 private:
  double flip_rate_;
  int num_classes_;
  Rng rng_;
};

/// Delegates to a callback, e.g. a human front end.
class CallbackOracle : public Oracle {
 public:
  using Callback = std::function<std::optional<LabelSet>(const AnnotationItem&, const Sample&)>;
  CallbackOracle(std::string id, Callback callback)
      : id_(std::move(id)), callback_(std::move(callback)) {}
  std::string id() const override { return id_; }
  std::optional<LabelSet> annotate(const AnnotationItem& item, const Sample& sample) override {
    return callback_(item, sample);
  }

 private:
  std::string id_;
  Callback callback_;
};

std::int64_t utc_now_seconds();

/// Builds the audit record for a correction; nullopt when the oracle timed out.
std::optional<AnnotationRecord> oracle_correct(Oracle& oracle, const AnnotationItem& item,
                                               const Sample& sample, int iteration_index,
                                               std::int64_t timestamp);

struct ALConfig {
  /// Clean-set size that ends the loop (24,997 / 24,000 at full scale).
  std::size_t k_target = 600;
  /// Corrections per iteration (500 at full scale).
  std::size_t per_iteration = 100;
  /// Fine-tuning batch size.
  int finetune_batch = 50;
  int finetune_epochs = 1;
  double finetune_lr = 1e-2 / 4;
  int max_iterations = 1000;
  /// Retrain from fresh parameters instead of continuing (ablation).
  bool from_scratch = false;
  double clean_train_fraction = 0.8;
  /// Timeouts tolerated per item before the iteration gives up on it.
  int max_requeues = 3;

  void validate() const;
};

struct CleanSet {
  /// Ids in the order they entered the clean set.
  std::vector<SampleId> ids;
  std::vector<SampleId> train_ids;
  std::vector<SampleId> validation_ids;
};

struct IterationSummary {
  int iteration = 0;
  std::size_t reviewed = 0;
  std::size_t changed = 0;
  std::size_t clean_size = 0;
  std::size_t requeued = 0;
};

/// Mutable label-cleaning state: the pool with its current labels, the ensemble,
/// the clean set and the audit log. Single owner; callers serialize access.
class ALState {
 public:
  ALState(Dataset pool, Ensemble ensemble, ALConfig config, TrainSchedule scratch_schedule,
          std::uint64_t seed);

  const ALConfig& config() const { return config_; }
  const Ensemble& ensemble() const { return ensemble_; }
  Ensemble& ensemble() { return ensemble_; }
  /// Pool with the current (partially corrected) labels.
  Dataset dataset() const;
  const Sample& sample(SampleId id) const;
  std::size_t pool_size() const { return samples_.size(); }
  int num_classes() const { return num_classes_; }
  const std::set<SampleId>& clean_ids() const { return clean_; }
  const std::vector<SampleId>& clean_order() const { return clean_order_; }
  const std::vector<AnnotationRecord>& audit_log() const { return audit_; }
  const std::vector<IterationSummary>& history() const { return history_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int iteration() const { return iteration_; }
  std::size_t eligible_count() const { return samples_.size() - clean_.size(); }

  /// Fine-tunes (or retrains) the ensemble on the pool with current labels.
  void retrain();
  /// Scores every non-clean sample.
  std::vector<EpistemicScore> score() const;
  /// The next `count` highest-score items, score descending.
  std::vector<AnnotationItem> build_queue(std::size_t count) const;
  /// Applies a correction: relabels the sample, marks it human-corrected,
  /// adds it to the clean set and appends the record. Throws Error(kConflict)
  /// if the sample is already clean.
  void apply(const AnnotationRecord& record);
  void warn(std::string message) { warnings_.push_back(std::move(message)); }
  /// Closes the current iteration with its summary.
  IterationSummary close_iteration(std::size_t reviewed, std::size_t requeued);

  /// Stratified train/validation split of the clean set.
  CleanSet clean_set() const;
  std::uint64_t seed() const { return seed_; }

 private:
  ALConfig config_;
  TrainSchedule scratch_schedule_;
  std::uint64_t seed_;
  int num_classes_;
  int feature_dim_;
  std::vector<Sample> samples_;
  std::unordered_map<SampleId, std::size_t> index_;
  Ensemble ensemble_;
  std::vector<LearnerConfig> member_configs_;
  std::set<SampleId> clean_;
  std::vector<SampleId> clean_order_;
  std::vector<AnnotationRecord> audit_;
  std::vector<IterationSummary> history_;
  std::vector<std::string> warnings_;
  int iteration_ = 0;
  int retrain_count_ = 0;
};

/// One round: retrain, score, correct the top per_iteration samples via the
/// oracle (requeueing timeouts), grow the clean set.
IterationSummary run_al_iteration(ALState& state, Oracle& oracle);

struct CorrectionStats {
  /// Indexed by iteration.
  std::vector<std::int64_t> reviewed_per_iteration;
  std::vector<std::int64_t> changed_per_iteration;
  /// Records where class c flipped membership.
  std::vector<std::int64_t> corrections_per_class;
  /// corrections_per_class / total records.
  std::vector<double> corrected_fraction_per_class;
  std::int64_t total_records = 0;

  friend bool operator==(const CorrectionStats&, const CorrectionStats&) = default;
};

CorrectionStats correction_stats(std::span<const AnnotationRecord> records, int num_classes);

struct ALOutcome {
  CleanSet clean_set;
  /// Changed-count per iteration.
  std::vector<std::int64_t> effort_trace;
  CorrectionStats stats;
  std::vector<std::string> warnings;
};

/// Iterates until |D_c| >= k_target, max_iterations is reached or the pool is
/// exhausted (with a warning).
ALOutcome run_al_loop(ALState& state, Oracle& oracle);

/// Training set of a dataset's samples against hard targets of assigned labels.
TrainingSet hard_training_set(const Dataset& ds);

}  // namespace noisyal
