#include <doctest.h>

#include <random>
#include <set>

#include "noisyal/error.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/self_training.hpp"
#include "oracles.hpp"

using namespace noisyal;

namespace {

Dataset clean_data(int groups, int frames, std::uint64_t seed, double feature_noise = 0.5) {
  NoiseSpec spec;
  spec.p_absent = spec.p_spurious = 0.0;
  spec.feature_noise = feature_noise;
  spec.groups = groups;
  spec.frames_min = spec.frames_max = frames;
  return generate_synthetic(spec, 16, 8, seed);
}

std::vector<LearnerConfig> members(std::uint64_t seed) {
  const std::vector<int> hidden{0, 8};
  return member_configs(hidden, seed);
}

StageConfig quick() {
  StageConfig c;
  c.schedule.phase1_epochs = c.schedule.phase2_epochs = 3;
  c.finetune_epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("teacher fits a zero-noise clean set") {
  // Low feature noise so the classes are separable; the schedule is stretched
  // because the clean split is small.
  const Dataset ds = clean_data(100, 6, 3, 0.1);
  std::vector<SampleId> tr, va;
  for (const Sample& s : ds.samples()) (s.sample_id % 5 == 0 ? va : tr).push_back(s.sample_id);
  StageConfig cfg;
  cfg.schedule.phase1_epochs = cfg.schedule.phase2_epochs = 20;
  const auto result = train_teacher(cfg, ds.subset(tr), ds.subset(va), members(1), 7);
  CHECK(result.validation.macro_f1 >= 0.9);
  CHECK(result.validation.samples == static_cast<std::int64_t>(va.size()));
}

TEST_CASE("teacher edge cases and determinism") {
  const Dataset ds = clean_data(4, 3, 1);
  const std::vector<SampleId> one{ds[0].sample_id};
  const auto tiny = train_teacher(quick(), ds.subset(one), ds.subset(one), members(1), 1);
  CHECK(tiny.validation.samples == 1);
  CHECK_THROWS_AS(train_teacher(quick(), Dataset(8, 16, {}), ds, members(1), 1), Error);

  const auto a = train_teacher(quick(), ds, ds, members(2), 5);
  const auto b = train_teacher(quick(), ds, ds, members(2), 5);
  CHECK(a.ensemble == b.ensemble);

  const Ensemble init = make_ensemble(members(9), 16, 8);
  const auto warm = train_teacher(quick(), ds, ds, members(2), 5, &init);
  CHECK_FALSE(warm.ensemble == a.ensemble);
}

TEST_CASE("pseudo_label") {
  const Dataset ds = clean_data(5, 4, 2);
  const Ensemble teacher = make_ensemble(members(3), 16, 8);
  CHECK(pseudo_label(teacher, Dataset(8, 16, {})).empty());

  const Dataset pseudo = pseudo_label(teacher, ds);
  REQUIRE(pseudo.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(pseudo[i].sample_id == ds[i].sample_id);
    CHECK(pseudo[i].provenance == Provenance::kPseudo);
    REQUIRE(pseudo[i].soft_targets);
    for (double p : *pseudo[i].soft_targets) CHECK((p > 0.0 && p < 1.0));
  }
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(*pseudo[i].soft_targets == testing::composed_mean_sigmoid(teacher, ds[i].features));

  Ensemble twins = make_ensemble(members(3), 16, 8);
  twins.members = {twins.members[1], twins.members[1]};
  twins.weights = {0.5, 0.5};
  const auto z = twins.members[0].predict_logits(ds[0].features);
  const auto p = *pseudo_label(twins, ds)[0].soft_targets;
  for (std::size_t c = 0; c < z.size(); ++c) CHECK(p[c] == doctest::Approx(sigmoid(z[c])).epsilon(1e-15));
}

TEST_CASE("student targets") {
  const Dataset ds = clean_data(4, 2, 4);
  const Ensemble teacher = make_ensemble(members(3), 16, 8);
  const std::vector<SampleId> half{ds[0].sample_id, ds[1].sample_id};
  std::vector<SampleId> rest;
  for (std::size_t i = 2; i < ds.size(); ++i) rest.push_back(ds[i].sample_id);
  const Dataset pseudo = pseudo_label(teacher, ds.subset(rest));
  const Dataset clean = ds.subset(half);

  StageConfig cfg;
  auto data = student_training_set(cfg, pseudo, clean);
  REQUIRE(data.size() == ds.size());
  const auto soft = data.target(0);
  CHECK(std::vector<double>(soft.begin(), soft.end()) == *pseudo[0].soft_targets);
  const auto hard = data.target(pseudo.size());
  CHECK(std::vector<double>(hard.begin(), hard.end()) == hard_targets(clean[0].assigned_labels, 8));

  cfg.use_label_smoothing = true;
  cfg.pseudo_mode = PseudoTargetMode::kHardTop3;
  data = student_training_set(cfg, pseudo, clean);
  const auto top = data.target(0);
  CHECK(std::vector<double>(top.begin(), top.end()) == hard_targets(top3_decision(*pseudo[0].soft_targets), 8));
  const auto smooth = data.target(pseudo.size());
  CHECK(std::vector<double>(smooth.begin(), smooth.end()) == smooth_targets(clean[0].assigned_labels, 0.9, 8));

  const auto sets = student_label_sets(pseudo, clean);
  CHECK(sets.front() == top3_decision(*pseudo[0].soft_targets));
  CHECK(sets.back() == clean[1].assigned_labels);
}

TEST_CASE("student training") {
  const Dataset ds = clean_data(6, 5, 5);
  const auto teacher = train_teacher(quick(), ds, ds, members(1), 2);
  std::vector<SampleId> a, b;
  for (const Sample& s : ds.samples()) (s.group_id % 2 ? a : b).push_back(s.sample_id);
  const Dataset pseudo = pseudo_label(teacher.ensemble, ds.subset(a));
  const Dataset clean = ds.subset(b);

  SUBCASE("empty pseudo set trains on clean data only") {
    const auto s = train_student(quick(), Dataset(8, 16, {}), clean, members(4), nullptr, 3);
    CHECK(s.traces.size() == 2);
  }
  SUBCASE("soft and hard modes both complete") {
    StageConfig hard = quick();
    hard.pseudo_mode = PseudoTargetMode::kHardTop3;
    const auto s1 = train_student(quick(), pseudo, clean, members(4), nullptr, 3);
    const auto s2 = train_student(hard, pseudo, clean, members(4), nullptr, 3);
    CHECK_FALSE(s1.ensemble == s2.ensemble);
  }
  SUBCASE("warm start needs the teacher") {
    StageConfig warm = quick();
    warm.warm_start = true;
    CHECK_THROWS_AS(train_student(warm, pseudo, clean, members(4), nullptr, 3), Error);
    CHECK_NOTHROW(train_student(warm, pseudo, clean, members(4), &teacher.ensemble, 3));
  }
  SUBCASE("WDL changes only the fine-tuning distribution") {
    StageConfig off = quick(), on = quick();
    on.use_weighted_loader = true;
    const auto s_off = train_student(off, pseudo, clean, members(4), nullptr, 3);
    const auto s_on = train_student(on, pseudo, clean, members(4), nullptr, 3);
    CHECK(s_on.class_weights == s_off.class_weights);
    CHECK_FALSE(s_on.ensemble == s_off.ensemble);
    off.finetune_epochs = on.finetune_epochs = 0;
    CHECK(train_student(off, pseudo, clean, members(4), nullptr, 3).ensemble ==
          train_student(on, pseudo, clean, members(4), nullptr, 3).ensemble);
  }
}

TEST_CASE("WDL with equal class weights is a no-op") {
  // Every label set is one of two complementary pairs, so all four classes are equally frequent.
  std::vector<Sample> samples;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 40; ++i) {
    Sample s;
    s.sample_id = i;
    s.group_id = i;
    s.features = {g(rng), g(rng), g(rng)};
    s.assigned_labels = s.true_labels = (i % 2 ? LabelSet{0, 1} : LabelSet{2, 3});
    samples.push_back(s);
  }
  const Dataset clean(4, 3, samples);
  StageConfig off = quick(), on = quick();
  on.use_weighted_loader = true;
  const std::vector<int> hidden{0, 3};
  const auto cfgs = member_configs(hidden, 2);
  const auto s_off = train_student(off, Dataset(4, 3, {}), clean, cfgs, nullptr, 8);
  const auto s_on = train_student(on, Dataset(4, 3, {}), clean, cfgs, nullptr, 8);
  CHECK(s_on.class_weights == std::vector<double>(4, 1.0));
  CHECK(s_on.ensemble == s_off.ensemble);
}

TEST_CASE("predict is top-3 of sigmoid(mean logits)") {
  const Ensemble e = make_ensemble(members(6), 16, 8);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(16);
    for (double& v : x) v = g(rng);
    CHECK(predict(e, x) == testing::argsort_top3(testing::composed_mean_sigmoid(e, x)));
  }

  Learner a({0, 0, 0.0}, 1, 4), b({0, 0, 0.0}, 1, 4);
  for (int c = 0; c < 4; ++c) {
    a.parameters()[4 + c] = 0.5 * (c + 1);
    b.parameters()[4 + c] = -0.5 * (c + 1);
  }
  Ensemble anti;
  anti.members = {a, b};
  anti.weights = {0.5, 0.5};
  CHECK(predict(anti, std::vector<double>{1.0}) == LabelSet{0, 1, 2});
  Ensemble single;
  single.members = {a, a};
  single.weights = {0.5, 0.5};
  CHECK(predict(single, std::vector<double>{1.0}) == LabelSet{1, 2, 3});
}

TEST_CASE("evaluate_ensemble targets") {
  const Dataset ds = clean_data(3, 3, 9);
  const Ensemble e = make_ensemble(members(1), 16, 8);
  const auto r = evaluate_ensemble(e, ds, EvalTarget::kTrueLabels, "x");
  CHECK(r.stage == "x");
  CHECK(r.mean_loss.has_value());
  CHECK(r.samples == static_cast<std::int64_t>(ds.size()));
}
