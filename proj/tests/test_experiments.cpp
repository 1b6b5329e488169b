#include <doctest.h>

#include "noisyal/error.hpp"
#include "noisyal/experiments.hpp"

using namespace noisyal;

namespace {

// A few seconds per ladder instead of the full desk-scale run.
BenchmarkConfig tiny_config() {
  BenchmarkConfig cfg;
  cfg.noise.groups = 40;
  cfg.noise.frames_min = cfg.noise.frames_max = 10;
  cfg.feature_dim = 12;
  cfg.num_classes = 6;
  cfg.member_hidden = {0, 4};
  cfg.schedule.phase1_epochs = cfg.schedule.phase2_epochs = 2;
  cfg.teacher_schedule = cfg.schedule;
  cfg.student.schedule = cfg.schedule;
  cfg.student.finetune_epochs = 1;
  cfg.al.k_target = 90;
  cfg.al.per_iteration = 30;
  return cfg;
}

}  // namespace

TEST_CASE("trend_test") {
  const std::vector<double> down{50, 40, 30};
  const auto r = trend_test(down);
  CHECK(r.slope == doctest::Approx(-10.0));
  CHECK(r.pass);
  const std::vector<double> flat{7, 7, 7, 7};
  CHECK(trend_test(flat).slope == 0.0);
  CHECK_FALSE(trend_test(flat).pass);
  const std::vector<std::int64_t> ints{1, 3, 2, 6};
  CHECK(trend_test(ints).slope == doctest::Approx(1.4));  // 7 / 5
  CHECK_THROWS_AS(trend_test(std::vector<double>{1, 2}), Error);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("median_report takes per-field medians") {
  std::vector<EvaluationReport> reports(3);
  const double f1[] = {0.2, 0.9, 0.5};
  for (int i = 0; i < 3; ++i) {
    reports[i].num_classes = 1;
    reports[i].confusion = {{i, 0, 0, 0}};
    reports[i].per_class = {{0.0, 0.0, 0.0, f1[i]}};
    reports[i].macro_f1 = f1[i];
  }
  const auto m = median_report(reports, "x");
  CHECK(m.stage == "x");
  CHECK(m.macro_f1 == 0.5);
  CHECK(m.per_class[0].f1 == 0.5);
}

TEST_CASE("ladder runs every stage and aggregates") {
  const BenchmarkConfig cfg = tiny_config();
  const LadderResult ladder = run_ladder(cfg, 3);
  CHECK(ladder.effort_trace.size() == 3);
  for (const auto& name : benchmark_names()) {
    const auto& r = stage_report(ladder, name);
    CHECK(r.num_classes == 6);
    CHECK(r.samples > 0);
  }
  CHECK(ladder.baseline_noisy.samples == ladder.baseline_clean.samples);
  CHECK_THROWS_AS(stage_report(ladder, "nope"), Error);

  const std::vector<LadderResult> one{ladder};
  const auto single = collect_benchmark("student", one);
  CHECK(single.median.macro_f1 == ladder.student.macro_f1);
  CHECK(single.median.per_class.size() == ladder.student.per_class.size());

  const std::vector<std::uint64_t> seeds{3};
  const auto again = run_benchmark("student", seeds, cfg);
  CHECK(again.median == single.median);
  CHECK_THROWS_AS(run_benchmark("teacher-x", seeds, cfg), Error);
}
