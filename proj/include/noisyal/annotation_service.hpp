#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "noisyal/active_learning.hpp"

namespace noisyal {

/// Transport-neutral request; the HTTP adapter fills it from a socket request.
struct ServiceRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ServiceResponse {
  int status = 200;
  /// JSON, or empty for 204.
  std::string body;
};

enum class SessionPhase { kAnnotating, kRetraining };

std::string to_string(SessionPhase phase);

struct ServiceOptions {
  std::string run_id = "run";
  std::int64_t lease_ttl_seconds = 120;
  /// UTC seconds; tests inject a fake clock.
  std::function<std::int64_t()> clock = utc_now_seconds;
  /// Audit log appended on every applied correction, if set.
  std::optional<std::filesystem::path> audit_path;
};

/// Live-oracle front of an ALState. Every mutation runs under one mutex; a
/// retrain runs outside it behind the RETRAINING phase, during which
/// annotation and queue requests are refused with 409.
class AnnotationService {
 public:
  /// Fine-tunes the ensemble and fills the first queue.
  AnnotationService(ALState& state, ServiceOptions options);

  ServiceResponse handle(const ServiceRequest& request);

  ServiceResponse next_item(const std::string& annotator_id);
  ServiceResponse submit(const std::string& body);
  ServiceResponse advance(const std::string& body);
  ServiceResponse progress() const;

  /// True once the clean set reached k_target (or the pool ran out) and the
  /// last iteration has been advanced.
  bool finished() const;
  SessionPhase phase() const;

 private:
  struct Lease {
    std::string token;
    SampleId sample_id = 0;
    std::string annotator_id;
    std::int64_t expires_at = 0;
  };

  void rebuild_queue_locked();
  void expire_leases_locked(std::int64_t now);
  std::string new_token_locked(SampleId id);
  bool finished_locked() const;

  ALState& state_;
  ServiceOptions options_;
  mutable std::mutex mu_;
  SessionPhase phase_ = SessionPhase::kAnnotating;
  int iteration_ = 0;
  /// Score-descending items not yet submitted this iteration.
  std::vector<AnnotationItem> queue_;
  std::map<std::string, Lease> leases_;
  /// Tokens that timed out or were revoked by a forced advance.
  std::set<std::string> expired_;
  /// Submitted token -> record, for replay.
  std::map<std::string, AnnotationRecord> completed_;
  std::vector<AnnotationRecord> records_;
  std::size_t clean_size_ = 0;
  std::size_t submitted_this_iteration_ = 0;
  std::uint64_t token_counter_ = 0;
};

}  // namespace noisyal
