#include "noisyal/experiments.hpp"

#include <algorithm>

#include "noisyal/error.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

BenchmarkConfig::BenchmarkConfig() {
  // Frames carry a weak trace of every installed tool, visible or not; this is
  // what lets a model fit the clip-level labels better than the true ones.
  noise.installed_cue_scale = 1.0;
  student.warm_start = true;
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

LadderResult run_ladder(const BenchmarkConfig& cfg, std::uint64_t seed) {
  LadderResult out;
  out.seed = seed;
  const Dataset ds = generate_synthetic(cfg.noise, cfg.feature_dim, cfg.num_classes,
                                        derive_seed(seed, 1));
  const DataSplit split = group_aware_split(ds, cfg.test_fraction, derive_seed(seed, 2));
  out.test_mass = static_cast<double>(split.test_ids.size()) / static_cast<double>(ds.size());
  const Dataset train = ds.subset(split.train_ids);
  const Dataset test = ds.subset(split.test_ids);
  const auto members = member_configs(cfg.member_hidden, derive_seed(seed, 3), cfg.member_init_scale);

  // Noisy baseline on extrapolated labels.
  Ensemble baseline = make_ensemble(members, cfg.feature_dim, cfg.num_classes);
  train_ensemble(baseline, hard_training_set(train), cfg.schedule, derive_seed(seed, 4));
  out.baseline_clean = evaluate_ensemble(baseline, test, EvalTarget::kTrueLabels, "noisy-baseline");
  out.baseline_noisy =
      evaluate_ensemble(baseline, test, EvalTarget::kAssignedLabels, "noisy-baseline/noisy-labels");

  // Label cleaning.
  ALState state(train, baseline, cfg.al, cfg.schedule, derive_seed(seed, 5));
  ScriptedOracle oracle;
  const ALOutcome al = run_al_loop(state, oracle);
  out.effort_trace = al.effort_trace;
  out.correction_stats = al.stats;
  out.al_clean = evaluate_ensemble(state.ensemble(), test, EvalTarget::kTrueLabels, "al-clean");

  const Dataset pool = state.dataset();
  const Dataset clean_train = pool.subset(al.clean_set.train_ids);
  const Dataset clean_val = pool.subset(al.clean_set.validation_ids);
  std::vector<SampleId> unclean_ids;
  for (const Sample& s : pool.samples())
    if (!state.clean_ids().count(s.sample_id)) unclean_ids.push_back(s.sample_id);
  const Dataset unclean = pool.subset(unclean_ids);

  StageConfig teacher_cfg;
  teacher_cfg.schedule = cfg.teacher_schedule;
  const TeacherResult teacher =
      train_teacher(teacher_cfg, clean_train, clean_val, members, derive_seed(seed, 6),
                    cfg.teacher_from_al ? &state.ensemble() : nullptr);
  out.teacher = evaluate_ensemble(teacher.ensemble, test, EvalTarget::kTrueLabels, "teacher");

  const Dataset pseudo = pseudo_label(teacher.ensemble, unclean);
  auto run_student = [&](const StageConfig& sc, const std::string& stage) {
    const auto result = train_student(sc, pseudo, clean_train, members, &teacher.ensemble,
                                      derive_seed(seed, 7));
    return evaluate_ensemble(result.ensemble, test, EvalTarget::kTrueLabels, stage);
  };
  StageConfig base = cfg.student;
  base.use_label_smoothing = false;
  base.use_weighted_loader = false;
  out.student = run_student(base, "student");

  StageConfig smooth = base;
  smooth.use_label_smoothing = true;
  smooth.smoothing_p = cfg.smoothing_p;
  out.student_smooth = run_student(smooth, "student-smooth");

  StageConfig wdl = base;
  wdl.use_weighted_loader = true;
  out.student_wdl = run_student(wdl, "student-wdl");

  StageConfig hard = base;
  hard.pseudo_mode = PseudoTargetMode::kHardTop3;
  out.student_hard = run_student(hard, "student-hard-pseudo");
  return out;
}

const EvaluationReport& stage_report(const LadderResult& ladder, const std::string& name) {
  if (name == "noisy-baseline") return ladder.baseline_clean;
  if (name == "al-clean") return ladder.al_clean;
  if (name == "teacher") return ladder.teacher;
  if (name == "student") return ladder.student;
  if (name == "student-smooth") return ladder.student_smooth;
  if (name == "student-wdl") return ladder.student_wdl;
  fail(ErrorKind::kInvalidArgument, "unknown benchmark '" + name + "'");
}

EvaluationReport median_report(std::span<const EvaluationReport> reports, const std::string& stage) {
  require(!reports.empty(), "no reports to aggregate");
  EvaluationReport m = reports.front();
  m.stage = stage;
  auto med = [&](auto getter) {
    std::vector<double> values;
    for (const auto& r : reports) values.push_back(getter(r));
    return median(std::move(values));
  };
  m.macro_precision = med([](const EvaluationReport& r) { return r.macro_precision; });
  m.macro_recall = med([](const EvaluationReport& r) { return r.macro_recall; });
  m.macro_accuracy = med([](const EvaluationReport& r) { return r.macro_accuracy; });
  m.macro_f1 = med([](const EvaluationReport& r) { return r.macro_f1; });
  if (std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.mean_loss.has_value(); }))
    m.mean_loss = med([](const EvaluationReport& r) { return *r.mean_loss; });
  else
    m.mean_loss.reset();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    m.per_class[c].precision = med([&](const EvaluationReport& r) { return r.per_class.at(c).precision; });
    m.per_class[c].recall = med([&](const EvaluationReport& r) { return r.per_class.at(c).recall; });
    m.per_class[c].accuracy = med([&](const EvaluationReport& r) { return r.per_class.at(c).accuracy; });
    m.per_class[c].f1 = med([&](const EvaluationReport& r) { return r.per_class.at(c).f1; });
  }
  if (reports.size() > 1) {
    // Confusion counts and hashes are per-seed quantities.
    m.dataset_hash = "median";
    for (auto& cm : m.confusion) cm = {};
    m.samples = 0;
  }
  return m;
}

BenchmarkResult collect_benchmark(const std::string& name, std::span<const LadderResult> ladders) {
  BenchmarkResult out;
  out.name = name;
  for (const auto& ladder : ladders) {
    out.seeds.push_back(ladder.seed);
    out.per_seed.push_back(stage_report(ladder, name));
  }
  out.median = median_report(out.per_seed, name);
  return out;
}

BenchmarkResult run_benchmark(const std::string& name, std::span<const std::uint64_t> seeds,
                              const BenchmarkConfig& cfg) {
  const auto& names = benchmark_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    fail(ErrorKind::kInvalidArgument, "unknown benchmark '" + name + "'");
  require(!seeds.empty(), "benchmark needs at least one seed");
  std::vector<LadderResult> ladders;
  for (std::uint64_t seed : seeds) ladders.push_back(run_ladder(cfg, seed));
  return collect_benchmark(name, ladders);
}

TrendResult trend_test(std::span<const double> trace) {
  require(trace.size() >= 3, "trend test needs at least 3 points");
  const auto n = static_cast<double>(trace.size());
  const double mean_x = (n - 1.0) / 2.0;
  double mean_y = 0.0;
  for (double y : trace) mean_y += y;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (trace[i] - mean_y);
    sxx += dx * dx;
  }
  TrendResult r;
  r.slope = sxy / sxx;
  r.pass = r.slope < 0.0;
  return r;
}

TrendResult trend_test(std::span<const std::int64_t> trace) {
  std::vector<double> values(trace.begin(), trace.end());
  return trend_test(values);
}

}  // namespace noisyal
