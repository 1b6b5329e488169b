#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "noisyal/active_learning.hpp"
#include "noisyal/error.hpp"
#include "oracles.hpp"

using namespace noisyal;

namespace {

Dataset pool(int groups, int frames, double p_absent, std::uint64_t seed, int t = 6) {
  NoiseSpec spec;
  spec.p_absent = p_absent;
  spec.p_spurious = 0.0;
  spec.groups = groups;
  spec.frames_min = spec.frames_max = frames;
  return generate_synthetic(spec, 8, t, seed);
}

Ensemble small_ensemble(const Dataset& ds, std::uint64_t seed) {
  const std::vector<int> hidden{0, 4};
  return make_ensemble(member_configs(hidden, seed), ds.feature_dim(), ds.num_classes());
}

ALConfig config(std::size_t k, std::size_t per) {
  ALConfig c;
  c.k_target = k;
  c.per_iteration = per;
  c.finetune_batch = 16;
  return c;
}

Ensemble constant_ensemble(const std::vector<double>& bias, int dim) {
  const int t = static_cast<int>(bias.size());
  Learner l({0, 0, 0.0}, dim, t);
  for (int c = 0; c < t; ++c) l.parameters()[t * dim + c] = bias[c];
  Ensemble e;
  e.members = {l};
  e.weights = {1.0};
  return e;
}

Sample sample_with(SampleId id, LabelSet assigned, LabelSet truth) {
  Sample s;
  s.sample_id = id;
  s.group_id = id;
  s.features = {0.5, 0.5};
  s.assigned_labels = assigned;
  s.true_labels = truth;
  return s;
}

}  // namespace

TEST_CASE("select_topk examples") {
  const std::vector<EpistemicScore> s{{1, 0.5}, {2, 0.9}, {3, 0.1}};
  CHECK(select_topk(s, 2) == std::vector<SampleId>{2, 1});
  const std::vector<EpistemicScore> tie{{9, 1.0}, {4, 1.0}, {7, 1.0}};
  CHECK(select_topk(tie, 2) == std::vector<SampleId>{4, 7});
  CHECK(select_topk(s, 0).empty());
  CHECK_THROWS_AS(select_topk(s, 4), Error);
}

TEST_CASE("select_topk equals a full sort") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> coarse(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EpistemicScore> scores;
    std::vector<SampleId> ids(1000);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (SampleId id : ids) scores.push_back({id, coarse(rng) / 7.0});
    const std::size_t k = rng() % 1001;
    CHECK(select_topk(scores, k) == testing::full_sort_topk(scores, k));
  }
}

TEST_CASE("score_samples") {
  const Ensemble e = constant_ensemble({3.0, -3.0, -3.0, -3.0}, 2);
  const Dataset ds(4, 2, {sample_with(0, {0}, {0}), sample_with(1, {1}, {0}), sample_with(2, {0}, {0})});
  const auto scores = score_samples(e, ds, {2});
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].sample_id == 0);
  CHECK(scores[1].score > scores[0].score);
  for (const auto& s : scores) CHECK(s.score >= 0.0);
  CHECK(score_samples(e, ds, {0, 1, 2}).empty());
}

TEST_CASE("scores on fitted zero-noise data stay bounded") {
  const Dataset ds = pool(20, 10, 0.0, 2);
  Ensemble e = small_ensemble(ds, 3);
  train_ensemble(e, hard_training_set(ds), TrainSchedule{}, 4);
  const auto scores = score_samples(e, ds, {});
  double lo = scores.front().score, hi = lo;
  for (const auto& s : scores) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
  }
  CHECK(lo > 0.0);
  CHECK(std::isfinite(hi / lo));
}

TEST_CASE("oracle_correct") {
  ScriptedOracle scripted;
  const AnnotationItem item{5, {0, 1}, {}, {}, 0.0};
  const auto same = oracle_correct(scripted, item, sample_with(5, {0, 1}, {0, 1}), 2, 100);
  REQUIRE(same);
  CHECK_FALSE(same->changed);
  CHECK(same->iteration_index == 2);
  CHECK(same->annotator_id == "scripted");

  const auto fixed = oracle_correct(scripted, item, sample_with(5, {0, 1}, {1}), 0, 100);
  REQUIRE(fixed);
  CHECK(fixed->changed);
  CHECK(fixed->corrected_labels == LabelSet{1});
  CHECK(fixed->previous_labels == LabelSet{0, 1});

  CallbackOracle silent("slow", [](const AnnotationItem&, const Sample&) { return std::nullopt; });
  CHECK_FALSE(oracle_correct(silent, item, sample_with(5, {0}, {0}), 0, 0));
}

TEST_CASE("noisy oracle flips about its rate") {
  NoisyOracle oracle(0.1, 14, 8);
  std::mt19937_64 rng(2);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    LabelSet truth;
    for (int k = 0; k < 3; ++k) truth.insert(static_cast<int>(rng() % 14));
    const auto answer = oracle.annotate({}, sample_with(i, {}, truth));
    REQUIRE(answer);
    CHECK(answer->size() <= 3);
    CHECK(answer->within(14));
    differ += *answer != truth;
  }
  const double sigma = std::sqrt(0.1 * 0.9 / 1000.0);
  CHECK(std::abs(differ / 1000.0 - 0.1) <= 3 * sigma);
  CHECK_THROWS_AS(NoisyOracle(1.5, 4, 1), Error);
}

TEST_CASE("one iteration grows the clean set by per_iteration") {
  const Dataset ds = pool(10, 10, 0.35, 5);
  ALState state(ds, small_ensemble(ds, 1), config(50, 5), TrainSchedule{}, 9);
  ScriptedOracle oracle;
  const auto summary = run_al_iteration(state, oracle);
  CHECK(summary.reviewed == 5);
  CHECK(state.clean_ids().size() == 5);
  CHECK(summary.clean_size == 5);
  CHECK(state.iteration() == 1);
  for (SampleId id : state.clean_ids()) {
    CHECK(state.sample(id).assigned_labels == state.sample(id).true_labels);
    CHECK(state.sample(id).provenance == Provenance::kHumanCorrected);
  }
}

TEST_CASE("zero-noise pool needs no changes") {
  const Dataset ds = pool(10, 10, 0.0, 6);
  ALState state(ds, small_ensemble(ds, 1), config(20, 10), TrainSchedule{}, 3);
  ScriptedOracle oracle;
  CHECK(run_al_iteration(state, oracle).changed == 0);
}

TEST_CASE("AL loop invariants with a scripted oracle") {
  const Dataset ds = pool(30, 10, 0.35, 7);
  ALState state(ds, small_ensemble(ds, 2), config(120, 20), TrainSchedule{}, 4);
  ScriptedOracle scripted;
  std::size_t previous = 0;
  std::set<SampleId> seen;
  CallbackOracle watcher("watcher", [&](const AnnotationItem& item, const Sample& s) {
    CHECK_FALSE(state.clean_ids().count(item.sample_id));
    CHECK(seen.insert(item.sample_id).second);
    return scripted.annotate(item, s);
  });
  while (state.clean_ids().size() < 120) {
    run_al_iteration(state, watcher);
    CHECK(state.clean_ids().size() >= previous);
    previous = state.clean_ids().size();
  }
  CHECK(state.clean_order().size() == state.clean_ids().size());
  CHECK(state.history().size() == 6);
  const auto stats = correction_stats(state.audit_log(), ds.num_classes());
  for (const auto& h : state.history()) {
    CHECK(stats.reviewed_per_iteration[h.iteration] == static_cast<std::int64_t>(h.reviewed));
    CHECK(stats.changed_per_iteration[h.iteration] == static_cast<std::int64_t>(h.changed));
  }
}

TEST_CASE("run_al_loop termination") {
  const Dataset ds = pool(10, 7, 0.35, 8);
  ScriptedOracle oracle;
  SUBCASE("k_target equal to per_iteration runs once") {
    ALState state(ds, small_ensemble(ds, 1), config(10, 10), TrainSchedule{}, 1);
    const auto out = run_al_loop(state, oracle);
    CHECK(out.effort_trace.size() == 1);
    CHECK(out.clean_set.ids.size() == 10);
  }
  SUBCASE("k_target beyond the pool stops at exhaustion with a warning") {
    ALState state(ds, small_ensemble(ds, 1), config(500, 30), TrainSchedule{}, 1);
    const auto out = run_al_loop(state, oracle);
    CHECK(out.clean_set.ids.size() == ds.size());
    CHECK_FALSE(out.warnings.empty());
  }
  SUBCASE("max_iterations caps the loop") {
    ALConfig c = config(60, 10);
    c.max_iterations = 2;
    ALState state(ds, small_ensemble(ds, 1), c, TrainSchedule{}, 1);
    CHECK(run_al_loop(state, oracle).effort_trace.size() == 2);
  }
}

TEST_CASE("desk-scale loop yields a six-step effort trace") {
  const Dataset ds = pool(70, 10, 0.35, 9);
  ALState state(ds, small_ensemble(ds, 1), config(600, 100), TrainSchedule{}, 5);
  ScriptedOracle oracle;
  const auto out = run_al_loop(state, oracle);
  CHECK(out.effort_trace.size() == 6);
  const auto& cs = out.clean_set;
  CHECK(cs.ids.size() == 600);
  std::set<SampleId> tr(cs.train_ids.begin(), cs.train_ids.end());
  for (SampleId id : cs.validation_ids) CHECK_FALSE(tr.count(id));
  CHECK(cs.train_ids.size() + cs.validation_ids.size() == 600);
  CHECK(cs.validation_ids.size() == 120);
}

TEST_CASE("timeouts are requeued and eventually dropped") {
  const Dataset ds = pool(5, 4, 0.35, 10);
  ScriptedOracle scripted;
  std::map<SampleId, int> calls;
  CallbackOracle flaky("flaky", [&](const AnnotationItem& item, const Sample& s) -> std::optional<LabelSet> {
    if (calls[item.sample_id]++ == 0) return std::nullopt;
    return scripted.annotate(item, s);
  });
  ALState state(ds, small_ensemble(ds, 1), config(10, 5), TrainSchedule{}, 1);
  const auto summary = run_al_iteration(state, flaky);
  CHECK(summary.reviewed == 5);
  CHECK(summary.requeued == 5);

  CallbackOracle dead("dead", [](const AnnotationItem&, const Sample&) { return std::nullopt; });
  ALState stuck(ds, small_ensemble(ds, 1), config(10, 5), TrainSchedule{}, 1);
  const auto none = run_al_iteration(stuck, dead);
  CHECK(none.reviewed == 0);
  CHECK(stuck.warnings().size() == 5);
  CHECK(stuck.clean_ids().empty());
}

TEST_CASE("apply rejects a second correction") {
  const Dataset ds = pool(3, 2, 0.35, 1);
  ALState state(ds, small_ensemble(ds, 1), config(4, 2), TrainSchedule{}, 1);
  AnnotationRecord r;
  r.sample_id = ds[0].sample_id;
  r.corrected_labels = ds[0].true_labels;
  state.apply(r);
  try {
    state.apply(r);
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConflict);
  }
}

TEST_CASE("correction_stats") {
  CHECK(correction_stats(std::vector<AnnotationRecord>{}, 6) == CorrectionStats{});
  std::vector<AnnotationRecord> records(3);
  records[0] = {1, {0, 5}, {0}, true, "a", 0, 0};
  records[1] = {2, {5}, {1}, true, "a", 0, 0};
  records[2] = {3, {2}, {2}, false, "a", 1, 0};
  const auto stats = correction_stats(records, 6);
  CHECK(stats.reviewed_per_iteration == std::vector<std::int64_t>{2, 1});
  CHECK(stats.changed_per_iteration == std::vector<std::int64_t>{2, 0});
  CHECK(stats.corrections_per_class == std::vector<std::int64_t>{0, 1, 0, 0, 0, 2});
  CHECK(stats.corrected_fraction_per_class[5] == doctest::Approx(2.0 / 3.0));
  CHECK(stats.total_records == 3);
}

TEST_CASE("audit log round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "noisyal_audit_test.jsonl";
  std::filesystem::remove(path);
  const AnnotationRecord a{4, {1, 2}, {2}, true, "ann \"x\"", 3, 1700000000};
  const AnnotationRecord b{9, {}, {}, false, "b", 3, 1700000001};
  append_audit_record(path, a);
  append_audit_record(path, b);
  CHECK(read_audit_log(path) == std::vector<AnnotationRecord>{a, b});
  CHECK(record_from_json_line(record_to_json_line(a)) == a);
  CHECK_THROWS_AS(record_from_json_line("{\"sample_id\":1}"), Error);
  std::filesystem::remove(path);
  CHECK(read_audit_log(path).empty());
}

TEST_CASE("ALConfig validation") {
  CHECK_THROWS_AS(config(5, 10).validate(), Error);
  CHECK_THROWS_AS(config(5, 0).validate(), Error);
  CHECK_NOTHROW(config(24997, 500).validate());
}
