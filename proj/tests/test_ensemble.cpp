#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "noisyal/ensemble.hpp"
#include "noisyal/error.hpp"
#include "noisyal/loss.hpp"

using namespace noisyal;

namespace {

// Linear member whose logits are `bias` for every input.
Learner constant_member(const std::vector<double>& bias, int dim = 2) {
  const int t = static_cast<int>(bias.size());
  Learner l({0, 0, 0.0}, dim, t);
  for (int c = 0; c < t; ++c) l.parameters()[t * dim + c] = bias[c];
  return l;
}

Ensemble constant_ensemble(const std::vector<std::vector<double>>& logits, std::vector<double> weights = {}) {
  Ensemble e;
  for (const auto& z : logits) e.members.push_back(constant_member(z));
  if (weights.empty()) weights.assign(logits.size(), 1.0 / static_cast<double>(logits.size()));
  e.weights = std::move(weights);
  return e;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

const std::vector<double> kX{0.3, -0.7};

}  // namespace

TEST_CASE("member configs") {
  const auto cfgs = default_member_configs(5);
  REQUIRE(cfgs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(cfgs[i].hidden_units == kDefaultHiddenUnits[i]);
    CHECK(cfgs[i].seed == derive_seed(5, i));
  }
  const std::vector<int> none;
  CHECK_THROWS_AS(member_configs(none, 1), Error);
  const std::vector<int> negative{4, -1};
  CHECK_THROWS_AS(member_configs(negative, 1), Error);
  const Ensemble e = make_ensemble(cfgs, 3, 5);
  CHECK(e.weights == std::vector<double>(4, 0.25));
  CHECK_NOTHROW(e.validate());
}

TEST_CASE("ensemble validation") {
  Ensemble e = constant_ensemble({{0, 0}, {1, 1}});
  e.weights = {0.0, 0.0};
  CHECK_THROWS_AS(e.validate(), Error);
  e.weights = {1.0, -0.5};
  CHECK_THROWS_AS(e.validate(), Error);
  e.weights = {1.0};
  CHECK_THROWS_AS(e.validate(), Error);
  Ensemble empty;
  CHECK_THROWS_AS(empty.validate(), Error);
}

TEST_CASE("ensemble_loss linearity and selector weights") {
  const std::vector<double> target{1.0, 0.0, 1.0};
  const std::vector<double> z{0.4, -1.2, 2.0};
  const double single = bce_loss(z, target).loss;
  const Ensemble same = constant_ensemble({z, z, z, z}, {0.3, 0.3, 0.3, 0.3});
  CHECK(ensemble_loss(same, kX, target) == doctest::Approx(4 * 0.3 * single).epsilon(1e-14));

  const std::vector<double> other{-3.0, 1.0, 0.0};
  const Ensemble sel = constant_ensemble({z, other, other, other}, {1, 0, 0, 0});
  CHECK(ensemble_loss(sel, kX, target) == single);
}

TEST_CASE("ensemble_loss hand evaluation") {
  // 0.5 ln 2 + 0.5 ln(1 + e^-2)
  const Ensemble e = constant_ensemble({{0, 0}, {2, -2}}, {0.5, 0.5});
  const std::vector<double> target{1.0, 0.0};
  CHECK(ensemble_loss(e, kX, target) == doctest::Approx(0.41003759580145893).epsilon(1e-14));
}

TEST_CASE("max_prob_output") {
  const Ensemble single = constant_ensemble({{0.5, -2.0, 3.0}});
  const auto p = max_prob_output(single, kX);
  for (int c = 0; c < 3; ++c) CHECK(p[c] == doctest::Approx(sig(std::vector<double>{0.5, -2.0, 3.0}[c])));

  const Ensemble pair = constant_ensemble({{1, -1}, {-1, 1}});
  const auto q = max_prob_output(pair, kX);
  CHECK(q[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(0.7310585786300049).epsilon(1e-15));

  const Ensemble four = constant_ensemble({{0.2, 0.1}, {0.2, 0.1}, {0.2, 0.1}, {0.2, 0.1}});
  CHECK(max_prob_output(four, kX) == max_prob_output(constant_ensemble({{0.2, 0.1}}), kX));
}

TEST_CASE("mean_logit_sigmoid") {
  const Ensemble e = constant_ensemble({{2, 0}, {0, 0}});
  const auto p = mean_logit_sigmoid(e, kX);
  CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(p[1] == 0.5);
  const Ensemble anti = constant_ensemble({{1.7, -4.0}, {-1.7, 4.0}});
  CHECK(mean_logit_sigmoid(anti, kX) == std::vector<double>{0.5, 0.5});
  // Mean logits ignore the loss weights.
  const Ensemble weighted = constant_ensemble({{2, 0}, {0, 0}}, {0.9, 0.1});
  CHECK(mean_logits(weighted, kX) == std::vector<double>{1.0, 0.0});
}

TEST_CASE("top3_decision") {
  CHECK(top3_decision(std::vector<double>{0.9, 0.1, 0.8, 0.7}) == LabelSet{0, 2, 3});
  CHECK(top3_decision(std::vector<double>(6, 0.4)) == LabelSet{0, 1, 2});
  CHECK(top3_decision(std::vector<double>{0.1, 0.5, 0.5, 0.2, 0.5}) == LabelSet{1, 2, 4});
  CHECK_THROWS_AS(top3_decision(std::vector<double>{0.1, 0.2}), Error);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(14);
    for (double& v : p) v = level(rng) / 10.0;  // coarse values force ties
    std::vector<int> order(14);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
    CHECK(top3_decision(p) == LabelSet{order[0], order[1], order[2]});
  }
}

TEST_CASE("confidence weights") {
  const std::vector<double> losses{1.0, 2.0, 4.0};
  const auto w = confidence_weights(losses);
  CHECK(w[0] == doctest::Approx(4.0 / 7.0));
  CHECK(w[1] == doctest::Approx(2.0 / 7.0));
  CHECK(w[2] == doctest::Approx(1.0 / 7.0));
  CHECK_THROWS_AS(confidence_weights(std::vector<double>{1.0, 0.0}), Error);
}

TEST_CASE("train_ensemble: parallel equals sequential and zero-weight members stay put") {
  TrainingSet data(3, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int i = 0; i < 120; ++i) {
    std::vector<double> x{g(rng), g(rng), g(rng)};
    std::vector<double> t(4, 0.0);
    t[x[0] > 0 ? 0 : 1] = 1.0;
    t[x[1] > 0 ? 2 : 3] = 1.0;
    data.add(x, t);
  }
  TrainSchedule s;
  s.phase1_epochs = s.phase2_epochs = 2;
  s.batch_size = 16;
  Ensemble a = make_ensemble(default_member_configs(4), 3, 4);
  Ensemble b = a;
  a.weights = b.weights = {0.5, 0.0, 0.25, 0.25};
  const Learner frozen = a.members[1];
  const double before = mean_ensemble_loss(a, data);
  train_ensemble(a, data, s, 10, nullptr, true);
  train_ensemble(b, data, s, 10, nullptr, false);
  CHECK(a == b);
  CHECK(a.members[1] == frozen);
  CHECK(mean_ensemble_loss(a, data) < before);

  const std::vector<double> uniform(data.size(), 1.0);
  Ensemble c = make_ensemble(default_member_configs(4), 3, 4), d = c;
  train_ensemble(c, data, s, 11, &uniform, true);
  train_ensemble(d, data, s, 11, &uniform, false);
  CHECK(c == d);
}

TEST_CASE("ensemble checkpoints round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "noisyal_ensemble_test";
  std::filesystem::remove_all(dir);
  Ensemble e = make_ensemble(default_member_configs(8), 5, 6);
  e.weights = {0.1, 0.2, 0.3, 0.4};
  save_ensemble(e, dir);
  const Ensemble back = load_ensemble(dir);
  CHECK(back == e);
  CHECK(ensemble_hash(back) == ensemble_hash(e));
  std::filesystem::remove(dir / "member_2.ckpt");
  CHECK_THROWS_AS(load_ensemble(dir), Error);
  std::filesystem::remove_all(dir);
}
