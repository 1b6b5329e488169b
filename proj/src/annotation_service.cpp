#include "noisyal/annotation_service.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "noisyal/error.hpp"
#include "noisyal/hash.hpp"

namespace noisyal {
namespace {

using nlohmann::ordered_json;

ServiceResponse json_response(int status, const ordered_json& body) {
  return {status, body.dump()};
}

ServiceResponse error_response(int status, std::string code, std::string message) {
  ordered_json j;
  j["error"]["code"] = std::move(code);
  j["error"]["message"] = std::move(message);
  return json_response(status, j);
}

ordered_json item_json(const AnnotationItem& item) {
  ordered_json j;
  j["sample_id"] = item.sample_id;
  j["current_labels"] = item.current_labels.ids();
  j["suggested"] = item.suggested.ids();
  j["max_probs"] = item.max_probs;
  j["score"] = item.score;
  return j;
}

ordered_json record_json(const AnnotationRecord& r) {
  return ordered_json::parse(record_to_json_line(r));
}

}  // namespace

std::string to_string(SessionPhase phase) {
  return phase == SessionPhase::kAnnotating ? "ANNOTATING" : "RETRAINING";
}

AnnotationService::AnnotationService(ALState& state, ServiceOptions options)
    : state_(state), options_(std::move(options)) {
  require(options_.lease_ttl_seconds > 0, "lease TTL must be positive");
  require(static_cast<bool>(options_.clock), "service clock is empty");
  records_ = state_.audit_log();
  iteration_ = state_.iteration();
  clean_size_ = state_.clean_ids().size();
  if (!finished_locked()) state_.retrain();
  rebuild_queue_locked();
}

bool AnnotationService::finished_locked() const {
  return clean_size_ >= state_.config().k_target || state_.eligible_count() == 0;
}

bool AnnotationService::finished() const {
  std::lock_guard lock(mu_);
  return phase_ == SessionPhase::kAnnotating && finished_locked() && queue_.empty() &&
         submitted_this_iteration_ == 0;
}

SessionPhase AnnotationService::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

void AnnotationService::rebuild_queue_locked() {
  const std::size_t target = state_.config().k_target;
  const std::size_t remaining = target > clean_size_ ? target - clean_size_ : 0;
  const std::size_t count =
      std::min({state_.config().per_iteration, remaining, state_.eligible_count()});
  queue_ = state_.build_queue(count);
}

void AnnotationService::expire_leases_locked(std::int64_t now) {
  for (auto& [token, lease] : leases_)
    if (lease.expires_at <= now) expired_.insert(token);
  std::erase_if(leases_, [&](const auto& kv) { return expired_.count(kv.first) > 0; });
}

std::string AnnotationService::new_token_locked(SampleId id) {
  const std::string seed_text = options_.run_id + ":" + std::to_string(id) + ":" +
                                std::to_string(token_counter_++);
  return content_hash(seed_text);
}

ServiceResponse AnnotationService::next_item(const std::string& annotator_id) {
  if (annotator_id.empty()) return error_response(400, "missing_annotator", "annotator_id is required");
  std::lock_guard lock(mu_);
  if (phase_ == SessionPhase::kRetraining)
    return error_response(409, "retraining", "the ensemble is retraining; retry shortly");
  const std::int64_t now = options_.clock();
  expire_leases_locked(now);
  for (const auto& [token, lease] : leases_)
    if (lease.annotator_id == annotator_id)
      return error_response(409, "lease_held",
                            "annotator already holds lease for sample " + std::to_string(lease.sample_id));
  std::set<SampleId> leased;
  for (const auto& [token, lease] : leases_) leased.insert(lease.sample_id);
  const auto it = std::find_if(queue_.begin(), queue_.end(),
                               [&](const AnnotationItem& item) { return !leased.count(item.sample_id); });
  if (it == queue_.end()) return {204, ""};

  Lease lease{new_token_locked(it->sample_id), it->sample_id, annotator_id,
              now + options_.lease_ttl_seconds};
  ordered_json j;
  j["lease_token"] = lease.token;
  j["expires_at"] = lease.expires_at;
  j["annotator_id"] = annotator_id;
  j["iteration"] = iteration_;
  j["item"] = item_json(*it);
  leases_.emplace(lease.token, std::move(lease));
  return json_response(200, j);
}

ServiceResponse AnnotationService::submit(const std::string& body) {
  std::string token;
  std::vector<ClassId> labels;
  try {
    const auto j = ordered_json::parse(body);
    token = j.at("lease_token").get<std::string>();
    const auto& arr = j.at("labels");
    if (!arr.is_array()) return error_response(400, "malformed", "labels must be an integer array");
    for (const auto& v : arr) {
      if (!v.is_number_integer()) return error_response(400, "invalid_labels", "label ids must be integers");
      labels.push_back(v.get<ClassId>());
    }
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "malformed", e.what());
  }

  std::lock_guard lock(mu_);
  if (const auto done = completed_.find(token); done != completed_.end())
    return json_response(200, record_json(done->second));
  if (phase_ == SessionPhase::kRetraining)
    return error_response(409, "retraining", "the ensemble is retraining; retry shortly");
  expire_leases_locked(options_.clock());
  if (expired_.count(token)) return error_response(410, "lease_expired", "lease has expired");
  const auto lease_it = leases_.find(token);
  if (lease_it == leases_.end()) return error_response(404, "unknown_lease", "no such lease token");

  const int T = state_.num_classes();
  const std::set<ClassId> distinct(labels.begin(), labels.end());
  if (distinct.size() != labels.size())
    return error_response(400, "invalid_labels", "label ids must be distinct");
  if (labels.size() > 3) return error_response(400, "invalid_labels", "at most 3 labels per frame");
  for (ClassId c : labels)
    if (c < 0 || c >= T)
      return error_response(400, "invalid_labels",
                            "label " + std::to_string(c) + " outside [0, " + std::to_string(T) + ")");

  const Lease lease = lease_it->second;
  AnnotationRecord record;
  record.sample_id = lease.sample_id;
  record.previous_labels = state_.sample(lease.sample_id).assigned_labels;
  record.corrected_labels = LabelSet(labels);
  record.changed = record.corrected_labels != record.previous_labels;
  record.annotator_id = lease.annotator_id;
  record.iteration_index = iteration_;
  record.timestamp = options_.clock();
  try {
    state_.apply(record);
  } catch (const Error& e) {
    return error_response(409, "conflict", e.what());
  }
  if (options_.audit_path) append_audit_record(*options_.audit_path, record);

  leases_.erase(lease_it);
  std::erase_if(queue_, [&](const AnnotationItem& item) { return item.sample_id == record.sample_id; });
  completed_.emplace(token, record);
  records_.push_back(record);
  ++clean_size_;
  ++submitted_this_iteration_;
  return json_response(200, record_json(record));
}

ServiceResponse AnnotationService::advance(const std::string& body) {
  bool force = false;
  if (!body.empty()) {
    try {
      const auto j = ordered_json::parse(body);
      if (j.contains("force")) force = j.at("force").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      return error_response(400, "malformed", e.what());
    }
  }

  IterationSummary closed;
  {
    std::lock_guard lock(mu_);
    if (phase_ == SessionPhase::kRetraining)
      return error_response(409, "retraining", "a retrain is already in progress");
    if (submitted_this_iteration_ == 0 && !force)
      return error_response(409, "nothing_to_advance", "no corrections collected in this iteration");
    if (!queue_.empty() && !force)
      return error_response(409, "iteration_incomplete",
                            std::to_string(queue_.size()) + " items still pending; pass force to advance");
    for (const auto& [token, lease] : leases_) expired_.insert(token);
    leases_.clear();
    closed = state_.close_iteration(submitted_this_iteration_, 0);
    iteration_ = state_.iteration();
    submitted_this_iteration_ = 0;
    queue_.clear();
    phase_ = SessionPhase::kRetraining;
  }

  // Only the advancing thread touches the ensemble while RETRAINING.
  std::string failure;
  try {
    if (!finished_locked()) state_.retrain();
  } catch (const Error& e) {
    failure = e.what();
  }

  std::lock_guard lock(mu_);
  rebuild_queue_locked();
  phase_ = SessionPhase::kAnnotating;
  if (!failure.empty()) return error_response(500, "retrain_failed", failure);
  ordered_json j;
  j["closed_iteration"] = closed.iteration;
  j["reviewed"] = closed.reviewed;
  j["changed"] = closed.changed;
  j["clean_size"] = clean_size_;
  j["iteration"] = iteration_;
  j["queue_size"] = queue_.size();
  j["finished"] = finished_locked() && queue_.empty();
  return json_response(200, j);
}

ServiceResponse AnnotationService::progress() const {
  std::lock_guard lock(mu_);
  const int T = state_.num_classes();
  CorrectionStats stats = correction_stats(records_, T);
  if (stats.corrections_per_class.empty()) {
    stats.corrections_per_class.assign(T, 0);
    stats.corrected_fraction_per_class.assign(T, 0.0);
  }
  ordered_json j;
  j["run_id"] = options_.run_id;
  j["phase"] = to_string(phase_);
  j["iteration"] = iteration_;
  j["reviewed_per_iteration"] = stats.reviewed_per_iteration;
  j["changed_per_iteration"] = stats.changed_per_iteration;
  j["corrections_per_class"] = stats.corrections_per_class;
  j["corrected_fraction_per_class"] = stats.corrected_fraction_per_class;
  j["total_records"] = stats.total_records;
  j["clean_size"] = clean_size_;
  j["k_target"] = state_.config().k_target;
  j["queue_remaining"] = queue_.size();
  j["active_leases"] = leases_.size();
  return json_response(200, j);
}

ServiceResponse AnnotationService::handle(const ServiceRequest& request) {
  const auto route = [&](const char* method, const char* path) {
    return request.path == path && request.method == method;
  };
  try {
    if (route("GET", "/queue/next")) {
      const auto it = request.query.find("annotator_id");
      return next_item(it == request.query.end() ? std::string() : it->second);
    }
    if (route("POST", "/annotations")) return submit(request.body);
    if (route("POST", "/iterations/advance")) return advance(request.body);
    if (route("GET", "/progress")) return progress();
  } catch (const Error& e) {
    return error_response(500, "internal", e.what());
  }
  for (const char* known : {"/queue/next", "/annotations", "/iterations/advance", "/progress"})
    if (request.path == known)
      return error_response(405, "method_not_allowed", request.method + " not supported on " + request.path);
  return error_response(404, "not_found", "no route for " + request.path);
}

}  // namespace noisyal
