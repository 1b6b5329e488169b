#include <doctest.h>

#include <filesystem>
#include <set>
#include <thread>

#include <json.hpp>

#include "noisyal/error.hpp"
#include "noisyal/http_service.hpp"

using namespace noisyal;

TEST_CASE("scripted client completes three iterations over HTTP") {
  NoiseSpec spec;
  spec.groups = 40;
  spec.frames_min = spec.frames_max = 10;
  const Dataset ds = generate_synthetic(spec, 12, 8, 4);
  const std::vector<int> hidden{0, 8};
  Ensemble e = make_ensemble(member_configs(hidden, 2), 12, 8);
  ALConfig cfg;
  cfg.k_target = 60;
  cfg.per_iteration = 20;
  cfg.finetune_batch = 50;
  ALState state(ds, std::move(e), cfg, TrainSchedule{}, 3);

  const auto audit = std::filesystem::temp_directory_path() / "noisyal_roundtrip_audit.jsonl";
  std::filesystem::remove(audit);
  ServiceOptions options;
  options.run_id = "roundtrip";
  options.audit_path = audit;
  AnnotationService service(state, options);
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  std::thread worker([&] { server.listen(); });
  server.wait_until_ready();

  HttpClient client("127.0.0.1", port);
  ScriptedClientOptions opts;
  opts.iterations = 3;
  opts.replay_duplicates = true;
  const Annotator truth = [&](SampleId id, const LabelSet&) { return ds.by_id(id).true_labels; };
  ScriptedClientResult result;
  try {
    result = run_scripted_client(client, truth, opts);
  } catch (...) {
    server.stop();
    worker.join();
    throw;
  }
  server.stop();
  worker.join();

  CHECK(result.iterations_completed == 3);
  CHECK(result.submitted == 60);
  CHECK(result.replays_matched == 60);
  CHECK(result.finished);

  // The audit log holds each correction once and the final progress matches its recount.
  const auto log = read_audit_log(audit);
  REQUIRE(log.size() == 60);
  std::set<SampleId> ids;
  for (const auto& r : log) ids.insert(r.sample_id);
  CHECK(ids.size() == 60);
  const auto stats = correction_stats(log, 8);
  const auto p = nlohmann::json::parse(result.final_progress);
  CHECK(p["reviewed_per_iteration"] == stats.reviewed_per_iteration);
  CHECK(p["changed_per_iteration"] == stats.changed_per_iteration);
  CHECK(p["corrections_per_class"] == stats.corrections_per_class);
  CHECK(p["total_records"] == stats.total_records);
  for (const auto& r : log) CHECK(r.corrected_labels == ds.by_id(r.sample_id).true_labels);
  std::filesystem::remove(audit);
}

TEST_CASE("binding a taken port fails") {
  ALConfig cfg;
  cfg.k_target = 2;
  cfg.per_iteration = 1;
  NoiseSpec spec;
  spec.groups = 2;
  spec.frames_min = spec.frames_max = 2;
  const Dataset ds = generate_synthetic(spec, 4, 4, 1);
  const std::vector<int> hidden{0};
  ALState state(ds, make_ensemble(member_configs(hidden, 1), 4, 4), cfg, TrainSchedule{}, 1);
  AnnotationService service(state, ServiceOptions{});
  HttpServer first(service), second(service);
  const int port = first.bind("127.0.0.1", 0);
  CHECK_THROWS_AS(second.bind("127.0.0.1", port), Error);
}
