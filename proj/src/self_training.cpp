#include "noisyal/self_training.hpp"

#include <algorithm>

#include "noisyal/error.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/manifest.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

void StageConfig::validate() const {
  require(smoothing_p > 0.5 && smoothing_p <= 1.0, "smoothing p must lie in (0.5, 1]");
  require(finetune_epochs >= 0, "finetune_epochs must be nonnegative");
  require(finetune_lr > 0.0, "finetune_lr must be positive");
  require(finetune_batch >= 1, "finetune_batch must be at least 1");
  schedule.validate();
}

namespace {

TrainingSet hard_set(const Dataset& ds) {
  TrainingSet data(ds.feature_dim(), ds.num_classes());
  for (const Sample& s : ds.samples())
    data.add(s.features, hard_targets(s.assigned_labels, ds.num_classes()));
  return data;
}

}  // namespace

TeacherResult train_teacher(const StageConfig& cfg, const Dataset& clean_train,
                            const Dataset& clean_validation,
                            std::span<const LearnerConfig> members, std::uint64_t seed,
                            const Ensemble* init) {
  cfg.validate();
  if (clean_train.empty()) fail(ErrorKind::kInvalidArgument, "teacher needs a nonempty clean set");
  TeacherResult out;
  out.ensemble = init ? *init
                      : make_ensemble(members, clean_train.feature_dim(), clean_train.num_classes());
  out.traces = train_ensemble(out.ensemble, hard_set(clean_train), cfg.schedule, seed);
  out.validation = evaluate_ensemble(out.ensemble, clean_validation, EvalTarget::kAssignedLabels,
                                     "teacher-validation");
  return out;
}

Dataset pseudo_label(const Ensemble& teacher, const Dataset& unclean) {
  std::vector<Sample> out;
  out.reserve(unclean.size());
  for (const Sample& s : unclean.samples()) {
    Sample p = s;
    p.provenance = Provenance::kPseudo;
    p.soft_targets = mean_logit_sigmoid(teacher, s.features);
    out.push_back(std::move(p));
  }
  return Dataset(unclean.num_classes(), unclean.feature_dim(), std::move(out));
}

TrainingSet student_training_set(const StageConfig& cfg, const Dataset& pseudo,
                                 const Dataset& clean_train) {
  const int t = clean_train.empty() ? pseudo.num_classes() : clean_train.num_classes();
  const int d = clean_train.empty() ? pseudo.feature_dim() : clean_train.feature_dim();
  TrainingSet data(d, t);
  for (const Sample& s : pseudo.samples()) {
    require(s.soft_targets.has_value(), "pseudo sample without soft targets");
    if (cfg.pseudo_mode == PseudoTargetMode::kSoft) data.add(s.features, *s.soft_targets);
    else data.add(s.features, hard_targets(top3_decision(*s.soft_targets), t));
  }
  for (const Sample& s : clean_train.samples()) {
    const auto m = static_cast<int>(s.assigned_labels.size());
    // Smoothing is undefined for empty or full label sets; those stay hard.
    if (cfg.use_label_smoothing && m > 0 && m < t)
      data.add(s.features, smooth_targets(s.assigned_labels, cfg.smoothing_p, t));
    else
      data.add(s.features, hard_targets(s.assigned_labels, t));
  }
  return data;
}

std::vector<LabelSet> student_label_sets(const Dataset& pseudo, const Dataset& clean_train) {
  std::vector<LabelSet> sets;
  sets.reserve(pseudo.size() + clean_train.size());
  for (const Sample& s : pseudo.samples()) sets.push_back(top3_decision(*s.soft_targets));
  for (const Sample& s : clean_train.samples()) sets.push_back(s.assigned_labels);
  return sets;
}

StudentResult train_student(const StageConfig& cfg, const Dataset& pseudo,
                            const Dataset& clean_train, std::span<const LearnerConfig> members,
                            const Ensemble* teacher, std::uint64_t seed) {
  cfg.validate();
  const TrainingSet data = student_training_set(cfg, pseudo, clean_train);
  require(!data.empty(), "student needs training data");
  StudentResult out;
  if (cfg.warm_start) {
    require(teacher != nullptr, "warm start requires the teacher ensemble");
    out.ensemble = *teacher;
  } else {
    out.ensemble = make_ensemble(members, data.input_dim(), data.num_classes());
  }
  out.traces = train_ensemble(out.ensemble, data, cfg.schedule, derive_seed(seed, 1));

  const auto label_sets = student_label_sets(pseudo, clean_train);
  std::vector<std::int64_t> counts(data.num_classes(), 0);
  for (const auto& set : label_sets)
    for (ClassId c : set) ++counts[c];
  out.class_weights = compute_class_weights(counts);

  std::vector<double> sample_weights(label_sets.size(), 1.0);
  const bool weights_usable =
      std::all_of(out.class_weights.begin(), out.class_weights.end(), [](double w) { return w > 0.0; });
  if (cfg.use_weighted_loader && weights_usable)
    for (std::size_t i = 0; i < label_sets.size(); ++i)
      sample_weights[i] = sample_weight(label_sets[i], out.class_weights, cfg.reduction);

  if (cfg.finetune_epochs > 0) {
    TrainSchedule finetune;
    finetune.phase1_epochs = cfg.finetune_epochs;
    finetune.phase2_epochs = 0;
    finetune.lr_phase1 = finetune.lr_phase2_max = finetune.lr_phase2_min = cfg.finetune_lr;
    finetune.batch_size = cfg.finetune_batch;
    out.finetune_traces =
        train_ensemble(out.ensemble, data, finetune, derive_seed(seed, 2), &sample_weights);
  }
  return out;
}

LabelSet predict(const Ensemble& e, std::span<const double> features) {
  return top3_decision(mean_logit_sigmoid(e, features));
}

std::vector<LabelSet> predict_all(const Ensemble& e, const Dataset& ds) {
  std::vector<LabelSet> out;
  out.reserve(ds.size());
  for (const Sample& s : ds.samples()) out.push_back(predict(e, s.features));
  return out;
}

EvaluationReport evaluate_ensemble(const Ensemble& e, const Dataset& ds, EvalTarget target,
                                   std::string stage) {
  std::vector<LabelSet> truths;
  truths.reserve(ds.size());
  double loss = 0.0;
  for (const Sample& s : ds.samples()) {
    const LabelSet& truth = target == EvalTarget::kTrueLabels ? s.true_labels : s.assigned_labels;
    truths.push_back(truth);
    loss += ensemble_loss(e, s.features, hard_targets(truth, ds.num_classes()));
  }
  auto report = evaluate(predict_all(e, ds), truths, ds.num_classes());
  report.stage = std::move(stage);
  report.dataset_hash = dataset_hash(ds);
  if (!ds.empty()) report.mean_loss = loss / static_cast<double>(ds.size());
  return report;
}

}  // namespace noisyal
