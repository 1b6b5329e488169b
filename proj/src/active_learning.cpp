#include "noisyal/active_learning.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>

#include "json.hpp"
#include "noisyal/error.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/manifest.hpp"

namespace noisyal {

using ordered_json = nlohmann::ordered_json;

std::vector<EpistemicScore> score_samples(const Ensemble& e, const Dataset& ds,
                                          const std::set<SampleId>& exclude) {
  std::vector<EpistemicScore> scores;
  for (const Sample& s : ds.samples()) {
    if (exclude.count(s.sample_id)) continue;
    const auto target = hard_targets(s.assigned_labels, ds.num_classes());
    scores.push_back({s.sample_id, ensemble_loss(e, s.features, target)});
  }
  return scores;
}

std::vector<SampleId> select_topk(std::span<const EpistemicScore> scores, std::size_t k) {
  require(k <= scores.size(), "k exceeds the number of scored samples");
  std::vector<EpistemicScore> sorted(scores.begin(), scores.end());
  auto by_rank = [](const EpistemicScore& a, const EpistemicScore& b) {
    return a.score > b.score || (a.score == b.score && a.sample_id < b.sample_id);
  };
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    by_rank);
  std::vector<SampleId> ids;
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back(sorted[i].sample_id);
  return ids;
}

AnnotationItem make_annotation_item(const Ensemble& e, const Sample& sample, double score) {
  AnnotationItem item;
  item.sample_id = sample.sample_id;
  item.current_labels = sample.assigned_labels;
  item.max_probs = max_prob_output(e, sample.features);
  item.suggested = top3_decision(item.max_probs);
  item.score = score;
  return item;
}

std::string record_to_json_line(const AnnotationRecord& r) {
  ordered_json j;
  j["sample_id"] = r.sample_id;
  j["previous_labels"] = r.previous_labels.ids();
  j["corrected_labels"] = r.corrected_labels.ids();
  j["changed"] = r.changed;
  j["annotator_id"] = r.annotator_id;
  j["iteration_index"] = r.iteration_index;
  j["timestamp"] = r.timestamp;
  return j.dump();
}

AnnotationRecord record_from_json_line(std::string_view line) {
  try {
    auto j = ordered_json::parse(line);
    AnnotationRecord r;
    r.sample_id = j.at("sample_id").get<SampleId>();
    r.previous_labels = LabelSet(j.at("previous_labels").get<std::vector<ClassId>>());
    r.corrected_labels = LabelSet(j.at("corrected_labels").get<std::vector<ClassId>>());
    r.changed = j.at("changed").get<bool>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.iteration_index = j.at("iteration_index").get<int>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("audit record: ") + e.what());
  }
}

void append_audit_record(const std::filesystem::path& path, const AnnotationRecord& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot append to " + path.string());
  out << record_to_json_line(record) << '\n';
  out.flush();
  if (!out) fail(ErrorKind::kIo, "append failed for " + path.string());
}

std::vector<AnnotationRecord> read_audit_log(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> records;
  if (!std::filesystem::exists(path)) return records;
  std::ifstream in(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json_line(line));
    } catch (const Error& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::string format_audit_log(std::span<const AnnotationRecord> records) {
  std::string out;
  for (const auto& r : records) out += record_to_json_line(r) + "\n";
  return out;
}

NoisyOracle::NoisyOracle(double flip_rate, int num_classes, std::uint64_t seed)
    : flip_rate_(flip_rate), num_classes_(num_classes), rng_(seed) {
  require(flip_rate >= 0.0 && flip_rate <= 1.0, "flip rate outside [0,1]");
  require(num_classes >= 1, "class count must be positive");
}

std::optional<LabelSet> NoisyOracle::annotate(const AnnotationItem&, const Sample& sample) {
  LabelSet answer = sample.true_labels;
  if (uniform01(rng_) >= flip_rate_) return answer;
  const auto c = static_cast<ClassId>(uniform01(rng_) * num_classes_);
  if (answer.contains(c) || answer.size() >= 3) {
    answer.erase(answer.contains(c) ? c : answer.ids().front());
  } else {
    answer.insert(c);
  }
  return answer;
}

std::int64_t utc_now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::optional<AnnotationRecord> oracle_correct(Oracle& oracle, const AnnotationItem& item,
                                               const Sample& sample, int iteration_index,
                                               std::int64_t timestamp) {
  auto answer = oracle.annotate(item, sample);
  if (!answer) return std::nullopt;
  AnnotationRecord r;
  r.sample_id = item.sample_id;
  r.previous_labels = sample.assigned_labels;
  r.corrected_labels = *answer;
  r.changed = r.corrected_labels != r.previous_labels;
  r.annotator_id = oracle.id();
  r.iteration_index = iteration_index;
  r.timestamp = timestamp;
  return r;
}

void ALConfig::validate() const {
  require(per_iteration >= 1, "per_iteration must be at least 1");
  require(per_iteration <= k_target, "per_iteration must not exceed k_target");
  require(finetune_batch >= 1 && finetune_epochs >= 0, "invalid fine-tuning settings");
  require(finetune_lr > 0.0, "fine-tuning learning rate must be positive");
  require(max_iterations >= 1, "max_iterations must be at least 1");
  require(clean_train_fraction > 0.0 && clean_train_fraction <= 1.0,
          "clean_train_fraction must lie in (0,1]");
}

ALState::ALState(Dataset pool, Ensemble ensemble, ALConfig config, TrainSchedule scratch_schedule,
                 std::uint64_t seed)
    : config_(config),
      scratch_schedule_(scratch_schedule),
      seed_(seed),
      num_classes_(pool.num_classes()),
      feature_dim_(pool.feature_dim()),
      samples_(pool.samples()),
      ensemble_(std::move(ensemble)) {
  config_.validate();
  ensemble_.validate();
  require(ensemble_.input_dim() == feature_dim_ && ensemble_.num_classes() == num_classes_,
          "ensemble does not match the pool dimensions");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    index_.emplace(samples_[i].sample_id, i);
    if (samples_[i].provenance == Provenance::kHumanCorrected) {
      clean_.insert(samples_[i].sample_id);
      clean_order_.push_back(samples_[i].sample_id);
    }
  }
  for (const Learner& m : ensemble_.members) member_configs_.push_back(m.config());
}

Dataset ALState::dataset() const { return Dataset(num_classes_, feature_dim_, samples_); }

const Sample& ALState::sample(SampleId id) const {
  auto it = index_.find(id);
  require(it != index_.end(), "sample " + std::to_string(id) + " is not in the pool");
  return samples_[it->second];
}

TrainingSet hard_training_set(const Dataset& ds) {
  TrainingSet data(ds.feature_dim(), ds.num_classes());
  for (const Sample& s : ds.samples())
    data.add(s.features, hard_targets(s.assigned_labels, ds.num_classes()));
  return data;
}

void ALState::retrain() {
  const TrainingSet data = hard_training_set(dataset());
  const std::uint64_t round_seed = derive_seed(seed_, 0x1000 + retrain_count_++);
  if (config_.from_scratch) {
    auto weights = ensemble_.weights;
    ensemble_ = make_ensemble(member_configs_, feature_dim_, num_classes_);
    ensemble_.weights = std::move(weights);
    train_ensemble(ensemble_, data, scratch_schedule_, round_seed);
    return;
  }
  TrainSchedule finetune;
  finetune.phase1_epochs = config_.finetune_epochs;
  finetune.phase2_epochs = 0;
  finetune.lr_phase1 = config_.finetune_lr;
  finetune.lr_phase2_max = config_.finetune_lr;
  finetune.lr_phase2_min = config_.finetune_lr;
  finetune.batch_size = config_.finetune_batch;
  train_ensemble(ensemble_, data, finetune, round_seed);
}

std::vector<EpistemicScore> ALState::score() const {
  std::vector<EpistemicScore> scores;
  scores.reserve(samples_.size() - clean_.size());
  for (const Sample& s : samples_) {
    if (clean_.count(s.sample_id)) continue;
    const auto target = hard_targets(s.assigned_labels, num_classes_);
    scores.push_back({s.sample_id, ensemble_loss(ensemble_, s.features, target)});
  }
  return scores;
}

std::vector<AnnotationItem> ALState::build_queue(std::size_t count) const {
  const auto scores = score();
  count = std::min(count, scores.size());
  std::map<SampleId, double> by_id;
  for (const auto& s : scores) by_id.emplace(s.sample_id, s.score);
  std::vector<AnnotationItem> queue;
  for (SampleId id : select_topk(scores, count))
    queue.push_back(make_annotation_item(ensemble_, sample(id), by_id.at(id)));
  return queue;
}

void ALState::apply(const AnnotationRecord& record) {
  auto it = index_.find(record.sample_id);
  require(it != index_.end(), "sample " + std::to_string(record.sample_id) + " is not in the pool");
  if (clean_.count(record.sample_id))
    fail(ErrorKind::kConflict, "sample " + std::to_string(record.sample_id) + " is already clean");
  require(record.corrected_labels.within(num_classes_), "corrected label outside [0, T)");
  Sample& s = samples_[it->second];
  s.assigned_labels = record.corrected_labels;
  s.provenance = Provenance::kHumanCorrected;
  s.soft_targets.reset();
  clean_.insert(record.sample_id);
  clean_order_.push_back(record.sample_id);
  audit_.push_back(record);
}

IterationSummary ALState::close_iteration(std::size_t reviewed, std::size_t requeued) {
  IterationSummary summary;
  summary.iteration = iteration_;
  summary.reviewed = reviewed;
  summary.requeued = requeued;
  for (const auto& r : audit_)
    if (r.iteration_index == iteration_ && r.changed) ++summary.changed;
  summary.clean_size = clean_.size();
  history_.push_back(summary);
  ++iteration_;
  return summary;
}

CleanSet ALState::clean_set() const {
  CleanSet out;
  out.ids = clean_order_;
  // Stratify by corrected label combination.
  std::map<LabelSet, std::vector<SampleId>> strata;
  for (SampleId id : clean_order_) strata[sample(id).assigned_labels].push_back(id);
  const double val_fraction = 1.0 - config_.clean_train_fraction;
  const auto val_total = static_cast<std::size_t>(std::llround(val_fraction * clean_order_.size()));

  struct Share {
    LabelSet combo;
    std::size_t base;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [combo, ids] : strata) {
    const double exact = val_fraction * static_cast<double>(ids.size());
    const auto base = static_cast<std::size_t>(exact);
    shares.push_back({combo, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::stable_sort(shares.begin(), shares.end(),
                   [](const Share& a, const Share& b) { return a.remainder > b.remainder; });
  for (auto& share : shares) {
    if (assigned >= val_total) break;
    if (share.base < strata.at(share.combo).size()) {
      ++share.base;
      ++assigned;
    }
  }

  Rng rng(derive_seed(seed_, 0xc1ea));
  for (const auto& share : shares) {
    auto ids = strata.at(share.combo);
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    out.validation_ids.insert(out.validation_ids.end(), ids.begin(),
                              ids.begin() + static_cast<std::ptrdiff_t>(share.base));
    out.train_ids.insert(out.train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(share.base),
                         ids.end());
  }
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.validation_ids.begin(), out.validation_ids.end());
  return out;
}

IterationSummary run_al_iteration(ALState& state, Oracle& oracle) {
  state.retrain();
  const std::size_t remaining_target =
      state.config().k_target > state.clean_ids().size()
          ? state.config().k_target - state.clean_ids().size()
          : 0;
  const std::size_t count = std::min(state.config().per_iteration, remaining_target);
  auto queue = state.build_queue(count);

  std::size_t reviewed = 0, requeued = 0;
  std::map<SampleId, int> timeouts;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const AnnotationItem item = queue[i];
    auto record = oracle_correct(oracle, item, state.sample(item.sample_id), state.iteration(),
                                 utc_now_seconds());
    if (!record) {
      if (++timeouts[item.sample_id] > state.config().max_requeues) {
        state.warn("sample " + std::to_string(item.sample_id) + " dropped after repeated oracle timeouts");
        continue;
      }
      ++requeued;
      queue.push_back(item);
      continue;
    }
    state.apply(*record);
    ++reviewed;
  }
  return state.close_iteration(reviewed, requeued);
}

CorrectionStats correction_stats(std::span<const AnnotationRecord> records, int num_classes) {
  CorrectionStats stats;
  if (records.empty()) return stats;
  stats.corrections_per_class.assign(num_classes, 0);
  stats.corrected_fraction_per_class.assign(num_classes, 0.0);
  for (const auto& r : records) {
    require(r.iteration_index >= 0, "negative iteration index in audit record");
    const auto it = static_cast<std::size_t>(r.iteration_index);
    if (stats.reviewed_per_iteration.size() <= it) {
      stats.reviewed_per_iteration.resize(it + 1, 0);
      stats.changed_per_iteration.resize(it + 1, 0);
    }
    ++stats.reviewed_per_iteration[it];
    if (r.changed) ++stats.changed_per_iteration[it];
    for (ClassId c : symmetric_difference(r.previous_labels, r.corrected_labels)) {
      require(c >= 0 && c < num_classes, "audit record label outside [0, T)");
      ++stats.corrections_per_class[c];
    }
    ++stats.total_records;
  }
  for (int c = 0; c < num_classes; ++c)
    stats.corrected_fraction_per_class[c] =
        static_cast<double>(stats.corrections_per_class[c]) / static_cast<double>(stats.total_records);
  return stats;
}

ALOutcome run_al_loop(ALState& state, Oracle& oracle) {
  const auto& cfg = state.config();
  if (cfg.k_target > state.pool_size())
    state.warn("k_target " + std::to_string(cfg.k_target) + " exceeds the pool size " +
               std::to_string(state.pool_size()) + "; stopping at pool exhaustion");
  while (state.clean_ids().size() < cfg.k_target && state.iteration() < cfg.max_iterations &&
         state.eligible_count() > 0) {
    const auto before = state.clean_ids().size();
    run_al_iteration(state, oracle);
    if (state.clean_ids().size() == before) {
      state.warn("iteration made no progress; stopping");
      break;
    }
  }
  ALOutcome out;
  out.clean_set = state.clean_set();
  for (const auto& h : state.history()) out.effort_trace.push_back(static_cast<std::int64_t>(h.changed));
  out.stats = correction_stats(state.audit_log(), state.num_classes());
  out.warnings = state.warnings();
  return out;
}

}  // namespace noisyal
