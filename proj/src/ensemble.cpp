#include "noisyal/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "noisyal/error.hpp"
#include "noisyal/hash.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/manifest.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

void Ensemble::validate() const {
  require(!members.empty(), "ensemble has no members");
  require(weights.size() == members.size(), "ensemble needs one weight per member");
  bool any_positive = false;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "ensemble weights must be finite and nonnegative");
    any_positive = any_positive || w > 0.0;
  }
  require(any_positive, "at least one ensemble weight must be positive");
  for (const Learner& m : members)
    require(m.input_dim() == members.front().input_dim() &&
                m.num_classes() == members.front().num_classes(),
            "ensemble members disagree on dimensions");
}

std::vector<LearnerConfig> member_configs(std::span<const int> hidden_units, std::uint64_t seed,
                                          double init_scale) {
  require(!hidden_units.empty(), "ensemble needs at least one member");
  std::vector<LearnerConfig> configs;
  for (std::size_t i = 0; i < hidden_units.size(); ++i) {
    require(hidden_units[i] >= 0, "hidden units must be nonnegative");
    configs.push_back({hidden_units[i], derive_seed(seed, i), init_scale});
  }
  return configs;
}

std::vector<LearnerConfig> default_member_configs(std::uint64_t seed, double init_scale) {
  return member_configs(kDefaultHiddenUnits, seed, init_scale);
}

Ensemble make_ensemble(std::span<const LearnerConfig> configs, int input_dim, int num_classes) {
  require(!configs.empty(), "ensemble needs at least one member config");
  Ensemble e;
  for (const auto& cfg : configs) e.members.emplace_back(cfg, input_dim, num_classes);
  e.weights.assign(configs.size(), 1.0 / static_cast<double>(configs.size()));
  return e;
}

double ensemble_loss(const Ensemble& e, std::span<const double> features,
                     std::span<const double> target) {
  double total = 0.0;
  std::vector<double> logits(e.num_classes());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.weights[i] == 0.0) continue;
    e.members[i].predict_logits(features, logits);
    total += e.weights[i] * bce_loss(logits, target, {});
  }
  return total;
}

std::vector<double> max_prob_output(const Ensemble& e, std::span<const double> features) {
  std::vector<double> out(e.num_classes(), 0.0);
  std::vector<double> logits(e.num_classes());
  for (const Learner& m : e.members) {
    m.predict_logits(features, logits);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::max(out[c], sigmoid(logits[c]));
  }
  return out;
}

std::vector<double> mean_logits(const Ensemble& e, std::span<const double> features) {
  std::vector<double> sum(e.num_classes(), 0.0);
  std::vector<double> logits(e.num_classes());
  for (const Learner& m : e.members) {
    m.predict_logits(features, logits);
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += logits[c];
  }
  for (double& v : sum) v /= static_cast<double>(e.size());
  return sum;
}

std::vector<double> mean_logit_sigmoid(const Ensemble& e, std::span<const double> features) {
  auto out = mean_logits(e, features);
  for (double& v : out) v = sigmoid(v);
  return out;
}

LabelSet top3_decision(std::span<const double> probs) {
  require(probs.size() >= 3, "top-3 decision needs at least 3 classes");
  std::vector<ClassId> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 3, idx.end(), [&](ClassId a, ClassId b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  });
  return LabelSet{idx[0], idx[1], idx[2]};
}

std::vector<double> confidence_weights(std::span<const double> validation_losses) {
  require(!validation_losses.empty(), "no validation losses");
  std::vector<double> w;
  for (double loss : validation_losses) {
    require(std::isfinite(loss) && loss > 0.0, "validation losses must be finite and positive");
    w.push_back(1.0 / loss);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

std::vector<TrainResult> train_ensemble(Ensemble& e, const TrainingSet& data,
                                        const TrainSchedule& schedule, std::uint64_t seed,
                                        const std::vector<double>* sample_weights,
                                        bool parallel) {
  e.validate();
  const double mean_w =
      std::accumulate(e.weights.begin(), e.weights.end(), 0.0) / static_cast<double>(e.size());
  std::vector<TrainResult> results(e.size());

  auto run_member = [&](std::size_t i) {
    if (e.weights[i] == 0.0) return;
    TrainSchedule s = schedule;
    const double scale = e.weights[i] / mean_w;
    s.lr_phase1 *= scale;
    s.lr_phase2_max *= scale;
    s.lr_phase2_min *= scale;
    const std::uint64_t member_seed = derive_seed(seed, i);
    if (sample_weights) {
      WeightedLoader loader(*sample_weights, s.batch_size, derive_seed(member_seed, 0x10ad));
      results[i] = train(e.members[i], data, s, &loader, member_seed);
    } else {
      results[i] = train(e.members[i], data, s, nullptr, member_seed);
    }
  };

  if (parallel && e.size() > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < e.size(); ++i)
      jobs.push_back(std::async(std::launch::async, run_member, i));
    for (auto& job : jobs) job.get();
  } else {
    for (std::size_t i = 0; i < e.size(); ++i) run_member(i);
  }
  return results;
}

double mean_ensemble_loss(const Ensemble& e, const TrainingSet& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    total += ensemble_loss(e, data.features(i), data.target(i));
  return total / static_cast<double>(data.size());
}

namespace {

std::string ensemble_meta(const Ensemble& e) {
  std::ostringstream out;
  out << "noisyal-ensemble v1\n"
      << "members=" << e.size() << '\n'
      << "weights=" << join_reals(e.weights) << '\n';
  for (std::size_t i = 0; i < e.size(); ++i)
    out << "member_" << i << '=' << content_hash(serialize_learner(e.members[i])) << '\n';
  std::string text = out.str();
  text += "hash=" + content_hash(text) + "\n";
  return text;
}

}  // namespace

std::string ensemble_hash(const Ensemble& e) { return content_hash(ensemble_meta(e)); }

void save_ensemble(const Ensemble& e, const std::filesystem::path& dir) {
  e.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < e.size(); ++i)
    save_learner(e.members[i], dir / ("member_" + std::to_string(i) + ".ckpt"));
  write_file(dir / "ensemble.meta", ensemble_meta(e));
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
  const auto meta_path = dir / "ensemble.meta";
  if (!std::filesystem::exists(meta_path))
    fail(ErrorKind::kMissingArtifact, "missing ensemble checkpoint " + meta_path.string());
  const std::string meta = read_file(meta_path);
  std::istringstream in(meta);
  std::string line;
  std::getline(in, line);
  if (line != "noisyal-ensemble v1") fail(ErrorKind::kParse, "bad ensemble header in " + meta_path.string());
  std::getline(in, line);
  if (line.rfind("members=", 0) != 0) fail(ErrorKind::kParse, "ensemble meta: missing members");
  const auto count = static_cast<std::size_t>(std::stoul(line.substr(8)));
  std::getline(in, line);
  if (line.rfind("weights=", 0) != 0) fail(ErrorKind::kParse, "ensemble meta: missing weights");
  Ensemble e;
  e.weights = split_reals(line.substr(8));
  for (std::size_t i = 0; i < count; ++i)
    e.members.push_back(load_learner(dir / ("member_" + std::to_string(i) + ".ckpt")));
  e.validate();
  if (ensemble_meta(e) != meta) fail(ErrorKind::kParse, "ensemble meta hash mismatch in " + dir.string());
  return e;
}

}  // namespace noisyal
