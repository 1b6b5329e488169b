#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "noisyal/dataset.hpp"
#include "noisyal/error.hpp"
#include "noisyal/learner.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/metrics.hpp"
#include "noisyal/sampling.hpp"

using namespace noisyal;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Reference BCE, written out per class.
double reference_bce(const std::vector<double>& z, const std::vector<double>& t) {
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double p = 1.0 / (1.0 + std::exp(-z[c]));
    sum += -(t[c] * std::log(p) + (1.0 - t[c]) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(z.size());
}

TrainingSet training_set(const Dataset& ds) {
  TrainingSet data(ds.feature_dim(), ds.num_classes());
  for (const Sample& s : ds.samples()) data.add(s.features, hard_targets(s.assigned_labels, ds.num_classes()));
  return data;
}

}  // namespace

TEST_CASE("hard_targets") {
  CHECK(hard_targets({}, 3) == std::vector<double>{0, 0, 0});
  CHECK(hard_targets({0, 2}, 4) == std::vector<double>{1, 0, 1, 0});
  CHECK(hard_targets({0, 1, 2, 3}, 4) == std::vector<double>{1, 1, 1, 1});
  CHECK_THROWS_AS(hard_targets({4}, 4), Error);
}

TEST_CASE("smooth_targets follows the mass-preserving formula") {
  const auto t = smooth_targets({0, 1, 2}, 0.9, 14);
  for (int c = 0; c < 3; ++c) CHECK(t[c] == doctest::Approx(0.9).epsilon(1e-15));
  for (int c = 3; c < 14; ++c) CHECK(t[c] == doctest::Approx(0.3 / 11.0).epsilon(1e-15));
  const auto m1 = smooth_targets({0}, 0.8, 5);
  const std::vector<double> expected{0.8, 0.05, 0.05, 0.05, 0.05};
  for (int c = 0; c < 5; ++c) CHECK(m1[c] == doctest::Approx(expected[c]).epsilon(1e-14));
  CHECK(smooth_targets({1, 3}, 1.0, 6) == hard_targets({1, 3}, 6));
  CHECK_THROWS_AS(smooth_targets({0}, 0.5, 4), Error);
  CHECK_THROWS_AS(smooth_targets({0}, 1.1, 4), Error);
  CHECK_THROWS_AS(smooth_targets({}, 0.9, 4), Error);
  CHECK_THROWS_AS(smooth_targets({0, 1, 2, 3}, 0.9, 4), Error);
}

TEST_CASE("bce_loss closed forms") {
  const std::vector<double> zeros(6, 0.0), halves(6, 0.5);
  CHECK(bce_loss(zeros, halves).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const std::vector<double> z{0.0}, t{1.0};
  const auto r = bce_loss(z, t);
  CHECK(r.loss == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(r.gradient[0] == doctest::Approx(-0.5).epsilon(1e-15));

  // Large logits stay finite.
  const std::vector<double> big{800.0, -800.0}, tt{0.0, 1.0};
  const auto extreme = bce_loss(big, tt);
  CHECK(std::isfinite(extreme.loss));
  CHECK(extreme.loss == doctest::Approx(800.0));
  CHECK_THROWS_AS(bce_loss(big, std::vector<double>{0.0}), Error);
}

TEST_CASE("bce_loss matches a reference and central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_vector(rng, 5, 2.0);
    std::vector<double> t(5);
    for (double& x : t) x = unit(rng);
    const auto r = bce_loss(z, t);
    CHECK(r.loss == doctest::Approx(reference_bce(z, t)).epsilon(1e-12));
    const double h = 1e-5;
    for (int c = 0; c < 5; ++c) {
      auto zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      const double fd = (bce_loss(zp, t).loss - bce_loss(zm, t).loss) / (2 * h);
      CHECK(std::abs(fd - r.gradient[c]) < 1e-6);
    }
  }
}

TEST_CASE("zero-initialized linear learner outputs zero logits") {
  const Learner l({0, 3, 0.0}, 4, 5);
  CHECK(l.parameter_count() == 5 * 4 + 5);
  const std::vector<double> x{1.0, -2.0, 3.0, 1e3};
  CHECK(l.predict_logits(x) == std::vector<double>(5, 0.0));
  CHECK_THROWS_AS(l.predict_logits(std::vector<double>{1.0}), Error);
}

TEST_CASE("learner construction is deterministic and stable") {
  const Learner a({8, 42, 1.0}, 6, 4), b({8, 42, 1.0}, 6, 4), c({8, 43, 1.0}, 6, 4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.parameter_count() == 8 * 6 + 8 + 4 * 8 + 4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> big(-1e3, 1e3);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(6);
    for (double& v : x) v = big(rng);
    const auto out = a.predict_logits(x);
    CHECK(out == a.predict_logits(x));
    for (double v : out) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(Learner({-1, 0, 1.0}, 2, 2), Error);
  CHECK_THROWS_AS(Learner({kMaxHiddenUnits + 1, 0, 1.0}, 2, 2), Error);
}

TEST_CASE("learner gradient matches central differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int hidden : {0, 5}) {
    Learner l({hidden, 17, 1.0}, 4, 3);
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_vector(rng, 4, 1.0);
      std::vector<double> t(3);
      for (double& v : t) v = unit(rng);
      std::vector<double> grad(l.parameter_count(), 0.0);
      l.accumulate_gradient(x, t, grad);
      auto params = l.parameters();
      const double h = 1e-6;
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double saved = params[k];
        params[k] = saved + h;
        const double up = bce_loss(l.predict_logits(x), t).loss;
        params[k] = saved - h;
        const double down = bce_loss(l.predict_logits(x), t).loss;
        params[k] = saved;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - grad[k]) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("train: zero epochs leaves the learner unchanged") {
  TrainingSet data(2, 3);
  data.add(std::vector<double>{1.0, 0.0}, std::vector<double>{1, 0, 0});
  Learner l({4, 1, 1.0}, 2, 3);
  const Learner before = l;
  TrainSchedule s;
  s.phase1_epochs = s.phase2_epochs = 0;
  const auto trace = train(l, data, s, nullptr, 3);
  CHECK(trace.epoch_losses.empty());
  CHECK(l == before);
}

TEST_CASE("train: identical seeds give identical parameters") {
  NoiseSpec spec;
  spec.groups = 20;
  spec.frames_min = spec.frames_max = 5;
  const Dataset ds = generate_synthetic(spec, 8, 6, 4);
  const TrainingSet data = training_set(ds);
  TrainSchedule s;
  s.phase1_epochs = s.phase2_epochs = 2;
  Learner a({6, 2, 1.0}, 8, 6), b({6, 2, 1.0}, 8, 6), c({6, 2, 1.0}, 8, 6);
  const auto ta = train(a, data, s, nullptr, 77);
  const auto tb = train(b, data, s, nullptr, 77);
  train(c, data, s, nullptr, 78);
  CHECK(a == b);
  CHECK(ta.epoch_losses == tb.epoch_losses);
  CHECK_FALSE(a == c);

  WeightedLoader la(std::vector<double>(data.size(), 1.0), 16, 5), lb(std::vector<double>(data.size(), 1.0), 16, 5);
  Learner d({0, 2, 1.0}, 8, 6), e({0, 2, 1.0}, 8, 6);
  train(d, data, s, &la, 1);
  train(e, data, s, &lb, 1);
  CHECK(d == e);
}

TEST_CASE("train: separable zero-noise data is fit under the top-3 rule") {
  // Low feature noise makes the classes linearly separable; at the default
  // 0.5 even an exact logistic fit stops near 0.76 macro-F1. 500 samples give
  // only 8 steps per epoch, so the phases are stretched to 20 epochs each.
  NoiseSpec spec;
  spec.p_absent = spec.p_spurious = 0.0;
  spec.feature_noise = 0.1;
  spec.groups = 250;
  spec.frames_min = spec.frames_max = 2;
  const Dataset ds = generate_synthetic(spec, 32, 14, 8);
  REQUIRE(ds.size() == 500);
  const TrainingSet data = training_set(ds);
  Learner l({0, 3, 1.0}, 32, 14);
  TrainSchedule schedule;
  schedule.phase1_epochs = schedule.phase2_epochs = 20;
  const auto trace = train(l, data, schedule, nullptr, 12);
  REQUIRE(trace.epoch_losses.size() == 40);
  CHECK(trace.epoch_losses.back() < trace.epoch_losses.front());
  std::vector<LabelSet> preds, truths;
  for (const Sample& s : ds.samples()) {
    const auto z = l.predict_logits(s.features);
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return z[a] > z[b]; });
    preds.push_back(LabelSet{static_cast<int>(order[0]), static_cast<int>(order[1]), static_cast<int>(order[2])});
    truths.push_back(s.assigned_labels);
  }
  CHECK(evaluate(preds, truths, 14).macro_f1 >= 0.95);
}

TEST_CASE("train: non-finite loss raises a numerical error") {
  TrainingSet data(1, 2);
  data.add(std::vector<double>{1.0}, std::vector<double>{1, 0});
  Learner l({0, 1, 1.0}, 1, 2);
  l.parameters()[0] = std::nan("");
  TrainSchedule s;
  s.phase1_epochs = 1;
  s.phase2_epochs = 0;
  try {
    train(l, data, s, nullptr, 1);
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
  }
}

TEST_CASE("learner checkpoints round-trip and detect tampering") {
  const Learner l({5, 99, 1.0}, 3, 4);
  const std::string text = serialize_learner(l);
  CHECK(deserialize_learner(text) == l);
  CHECK(serialize_learner(deserialize_learner(text)) == text);
  std::string bad = text;
  const auto pos = bad.find("parameters=");
  REQUIRE(pos != std::string::npos);
  bad[bad.find_first_of("0123456789", pos)] ^= 1;
  CHECK_THROWS_AS(deserialize_learner(bad), Error);
  CHECK_THROWS_AS(deserialize_learner(text.substr(0, text.size() / 2)), Error);
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  CHECK_NOTHROW(s.validate());
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.phase1_epochs = -1;
  CHECK_THROWS_AS(s.validate(), Error);
}
