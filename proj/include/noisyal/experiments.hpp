#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisyal/active_learning.hpp"
#include "noisyal/dataset.hpp"
#include "noisyal/metrics.hpp"
#include "noisyal/self_training.hpp"

namespace noisyal {

/// Desk-scale benchmark definition. Defaults: T=14, 300 clips x 20 frames,
/// d=32, imbalance 1.3, p_absent 0.25, p_spurious 0.05, k_target 600,
/// 100 corrections per iteration.
struct BenchmarkConfig {
  NoiseSpec noise;
  int feature_dim = 32;
  int num_classes = 14;
  double test_fraction = 0.2;
  std::vector<int> member_hidden{kDefaultHiddenUnits.begin(), kDefaultHiddenUnits.end()};
  double member_init_scale = 1.0;
  TrainSchedule schedule;
  ALConfig al;
  StageConfig student;
  double smoothing_p = 0.9;
  /// Teacher members start from the actively cleaned ensemble instead of fresh.
  bool teacher_from_al = true;
  TrainSchedule teacher_schedule;

  BenchmarkConfig();
};

/// All stages of one seed, evaluated on the held-out split.
struct LadderResult {
  std::uint64_t seed = 0;
  double test_mass = 0.0;
  EvaluationReport baseline_clean;
  EvaluationReport baseline_noisy;
  EvaluationReport al_clean;
  EvaluationReport teacher;
  EvaluationReport student;
  EvaluationReport student_smooth;
  EvaluationReport student_wdl;
  EvaluationReport student_hard;
  std::vector<std::int64_t> effort_trace;
  CorrectionStats correction_stats;
};

LadderResult run_ladder(const BenchmarkConfig& cfg, std::uint64_t seed);

inline const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"noisy-baseline", "al-clean",       "teacher",
                                                 "student",        "student-smooth", "student-wdl"};
  return names;
}

/// Clean-test report of the named stage within a ladder.
const EvaluationReport& stage_report(const LadderResult& ladder, const std::string& name);

struct BenchmarkResult {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<EvaluationReport> per_seed;
  /// Per-field median over seeds.
  EvaluationReport median;
};

/// Median of per-seed reports (per class and macro fields independently).
EvaluationReport median_report(std::span<const EvaluationReport> reports, const std::string& stage);

/// Throws Error(kInvalidArgument) for names outside benchmark_names().
BenchmarkResult run_benchmark(const std::string& name, std::span<const std::uint64_t> seeds,
                              const BenchmarkConfig& cfg = {});
/// Same, reusing already computed ladders.
BenchmarkResult collect_benchmark(const std::string& name, std::span<const LadderResult> ladders);

struct TrendResult {
  double slope = 0.0;
  bool pass = false;
};

/// Least-squares slope of the trace against its iteration index; passes when
/// negative. Throws for traces shorter than 3.
TrendResult trend_test(std::span<const double> trace);
TrendResult trend_test(std::span<const std::int64_t> trace);

double median(std::vector<double> values);

}  // namespace noisyal
