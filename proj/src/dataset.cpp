#include "noisyal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisyal/error.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kNoisyExtrapolated: return "noisy";
    case Provenance::kHumanCorrected: return "corrected";
    case Provenance::kPseudo: return "pseudo";
  }
  return "noisy";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "noisy") return Provenance::kNoisyExtrapolated;
  if (text == "corrected") return Provenance::kHumanCorrected;
  if (text == "pseudo") return Provenance::kPseudo;
  fail(ErrorKind::kParse, "unknown provenance '" + std::string(text) + "'");
}

Dataset::Dataset(int num_classes, int feature_dim, std::vector<Sample> samples)
    : num_classes_(num_classes), feature_dim_(feature_dim), samples_(std::move(samples)) {
  require(num_classes > 0, "class count must be positive");
  require(feature_dim > 0, "feature dimension must be positive");
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    const std::string where = "sample " + std::to_string(s.sample_id) + ": ";
    require(static_cast<int>(s.features.size()) == feature_dim,
            where + "feature dimension " + std::to_string(s.features.size()) + " != " +
                std::to_string(feature_dim));
    require(s.assigned_labels.within(num_classes), where + "assigned label out of range");
    require(s.true_labels.within(num_classes), where + "true label out of range");
    const bool pseudo = s.provenance == Provenance::kPseudo;
    require(pseudo == s.soft_targets.has_value(),
            where + "soft targets must be present exactly for pseudo samples");
    if (pseudo)
      require(static_cast<int>(s.soft_targets->size()) == num_classes,
              where + "soft target length must equal the class count");
    require(index_.emplace(s.sample_id, i).second, where + "duplicate sample id");
    groups_[s.group_id].push_back(s.sample_id);
  }
  for (const auto& [group, ids] : groups_)
    combo_index_[samples_[index_.at(ids.front())].assigned_labels].push_back(group);
}

const Sample& Dataset::by_id(SampleId id) const { return samples_[index_of(id)]; }

std::size_t Dataset::index_of(SampleId id) const {
  auto it = index_.find(id);
  require(it != index_.end(), "unknown sample id " + std::to_string(id));
  return it->second;
}

Dataset Dataset::subset(std::span<const SampleId> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (SampleId id : ids) rows.push_back(index_of(id));
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::vector<Sample> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(samples_[r]);
  return Dataset(num_classes_, feature_dim_, std::move(picked));
}

namespace {

// Draws `count` distinct classes, each step proportional to the remaining weights.
LabelSet draw_without_replacement(std::vector<double> weights, int count, Rng& rng) {
  LabelSet out;
  for (int k = 0; k < count; ++k) {
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = uniform01(rng) * total;
    std::size_t pick = weights.size() - 1;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (weights[c] <= 0.0) continue;
      pick = c;
      if (u < weights[c]) break;
      u -= weights[c];
    }
    out.insert(static_cast<ClassId>(pick));
    weights[pick] = 0.0;
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const NoiseSpec& spec, int feature_dim, int num_classes,
                           std::uint64_t seed) {
  require(num_classes >= 4, "generator needs at least 4 classes");
  require(feature_dim >= 1, "feature dimension must be positive");
  require(spec.frames_min >= 1, "frames_per_group must be at least 1");
  require(spec.frames_max >= spec.frames_min, "frames_max < frames_min");
  require(spec.groups >= 2, "generator needs at least 2 groups");
  require(spec.p_absent >= 0.0 && spec.p_absent <= 1.0, "p_absent outside [0,1]");
  require(spec.p_spurious >= 0.0 && spec.p_spurious <= 1.0, "p_spurious outside [0,1]");
  require(spec.feature_noise >= 0.0, "feature noise must be nonnegative");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> directions(num_classes, std::vector<double>(feature_dim));
  for (auto& dir : directions) {
    double norm = 0.0;
    do {
      for (double& v : dir) v = gauss(rng);
      norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
    } while (norm == 0.0);
    for (double& v : dir) v /= norm;
  }

  std::vector<std::vector<double>> cues(num_classes, std::vector<double>(feature_dim));
  if (spec.installed_cue_scale != 0.0) {
    for (auto& dir : cues) {
      double norm = 0.0;
      do {
        for (double& v : dir) v = gauss(rng);
        norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
      } while (norm == 0.0);
      for (double& v : dir) v /= norm;
    }
  }

  std::vector<double> prior(num_classes);
  for (int c = 0; c < num_classes; ++c)
    prior[c] = std::pow(static_cast<double>(c + 1), -spec.imbalance_exponent);

  std::vector<Sample> samples;
  SampleId next_id = 0;
  const int frame_span = spec.frames_max - spec.frames_min + 1;
  for (GroupId g = 0; g < spec.groups; ++g) {
    const int frames =
        spec.frames_min + static_cast<int>(std::floor(uniform01(rng) * frame_span));
    const LabelSet triple = draw_without_replacement(prior, 3, rng);
    std::vector<ClassId> outside;
    for (ClassId c = 0; c < num_classes; ++c)
      if (!triple.contains(c)) outside.push_back(c);

    for (int f = 0; f < frames; ++f) {
      LabelSet truth;
      for (ClassId c : triple)
        if (!(uniform01(rng) < spec.p_absent)) truth.insert(c);
      // A frame shows at most three tools; surplus spurious candidates are
      // dropped at random.
      std::vector<ClassId> spurious;
      for (ClassId c : outside)
        if (uniform01(rng) < spec.p_spurious) spurious.push_back(c);
      std::shuffle(spurious.begin(), spurious.end(), rng);
      for (ClassId c : spurious) {
        if (truth.size() >= 3) break;
        truth.insert(c);
      }

      Sample s;
      s.sample_id = next_id++;
      s.group_id = g;
      s.features.resize(feature_dim);
      for (double& v : s.features) v = spec.feature_noise * gauss(rng);
      for (ClassId c : truth)
        for (int j = 0; j < feature_dim; ++j)
          s.features[j] += spec.signal_scale * directions[c][j];
      if (spec.installed_cue_scale != 0.0)
        for (ClassId c : triple)
          for (int j = 0; j < feature_dim; ++j)
            s.features[j] += spec.installed_cue_scale * cues[c][j];
      s.assigned_labels = triple;
      s.true_labels = std::move(truth);
      samples.push_back(std::move(s));
    }
  }
  return Dataset(num_classes, feature_dim, std::move(samples));
}

DataSplit group_aware_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0,1)");
  require(ds.groups().size() >= 2, "group-aware split needs at least 2 groups");

  Rng rng(seed);
  DataSplit split;
  std::vector<GroupId> free_groups;
  std::vector<GroupId> test_groups;
  std::size_t test_frames = 0;

  for (const auto& [combo, group_ids] : ds.combo_index()) {
    if (group_ids.size() == 1) {
      split.singleton_combos.push_back(combo);
      const auto& frames = ds.groups().at(group_ids.front());
      const auto n = static_cast<long>(frames.size());
      long n_test = 0;
      if (n >= 2) n_test = std::clamp(std::lround(n * test_fraction), 1L, n - 1);
      // The clip tail goes to test.
      for (long i = 0; i < n; ++i)
        (i >= n - n_test ? split.test_ids : split.train_ids).push_back(frames[i]);
      test_frames += static_cast<std::size_t>(n_test);
      continue;
    }
    std::vector<GroupId> order = group_ids;
    std::shuffle(order.begin(), order.end(), rng);
    test_groups.push_back(order[0]);
    test_frames += ds.groups().at(order[0]).size();
    // order[1] stays on the train side.
    free_groups.insert(free_groups.end(), order.begin() + 2, order.end());
  }

  std::shuffle(free_groups.begin(), free_groups.end(), rng);
  const double target = test_fraction * static_cast<double>(ds.size());
  for (GroupId g : free_groups) {
    const double size = static_cast<double>(ds.groups().at(g).size());
    if (static_cast<double>(test_frames) + size / 2.0 < target) {
      test_groups.push_back(g);
      test_frames += ds.groups().at(g).size();
    }
  }

  std::sort(test_groups.begin(), test_groups.end());
  for (const auto& [combo, group_ids] : ds.combo_index()) {
    if (group_ids.size() == 1) continue;
    for (GroupId g : group_ids) {
      const bool to_test = std::binary_search(test_groups.begin(), test_groups.end(), g);
      auto& side = to_test ? split.test_ids : split.train_ids;
      const auto& frames = ds.groups().at(g);
      side.insert(side.end(), frames.begin(), frames.end());
    }
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

std::vector<std::int64_t> class_distribution(const Dataset& ds) {
  std::vector<std::int64_t> counts(ds.num_classes(), 0);
  for (const Sample& s : ds.samples())
    for (ClassId c : s.assigned_labels) ++counts[c];
  return counts;
}

double noisy_fraction(const Dataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t noisy = 0;
  for (const Sample& s : ds.samples()) noisy += s.assigned_labels != s.true_labels;
  return static_cast<double>(noisy) / static_cast<double>(ds.size());
}

}  // namespace noisyal
