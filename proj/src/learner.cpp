#include "noisyal/learner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "noisyal/error.hpp"
#include "noisyal/hash.hpp"
#include "noisyal/loss.hpp"
#include "noisyal/manifest.hpp"
#include "noisyal/rng.hpp"

namespace noisyal {

Learner::Learner(const LearnerConfig& config, int input_dim, int num_classes)
    : config_(config), input_dim_(input_dim), num_classes_(num_classes) {
  require(config.hidden_units >= 0 && config.hidden_units <= kMaxHiddenUnits,
          "hidden_units must lie in [0, 1024]");
  require(input_dim > 0 && num_classes > 0, "learner dimensions must be positive");
  require(std::isfinite(config.init_scale) && config.init_scale >= 0.0,
          "init_scale must be finite and nonnegative");
  const int d = input_dim, h = config.hidden_units, t = num_classes;
  params_.assign(h == 0 ? t * d + t : h * d + h + t * h + t, 0.0);
  if (config.init_scale == 0.0) return;

  Rng rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
    const double scale = config.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) params_[offset + i] = scale * gauss(rng);
  };
  if (h == 0) {
    fill(0, static_cast<std::size_t>(t) * d, d);
  } else {
    fill(0, static_cast<std::size_t>(h) * d, d);
    fill(static_cast<std::size_t>(h) * d + h, static_cast<std::size_t>(t) * h, h);
  }
}

void Learner::check_input(std::span<const double> features) const {
  if (static_cast<int>(features.size()) != input_dim_)
    fail(ErrorKind::kInvalidArgument, "feature dimension " + std::to_string(features.size()) +
                                          " does not match learner input " +
                                          std::to_string(input_dim_));
}

std::vector<double> Learner::predict_logits(std::span<const double> features) const {
  std::vector<double> logits(num_classes_);
  predict_logits(features, logits);
  return logits;
}

namespace {

// out[r] = b[r] + sum_j W[r, j] x[j]
void affine(const double* w, const double* b, std::span<const double> x, int rows,
            double* out) {
  const std::size_t cols = x.size();
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double acc = b[r];
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    out[r] = acc;
  }
}

}  // namespace

void Learner::predict_logits(std::span<const double> features, std::span<double> logits) const {
  check_input(features);
  require(static_cast<int>(logits.size()) == num_classes_, "logit buffer has wrong length");
  const int d = input_dim_, h = config_.hidden_units, t = num_classes_;
  const double* p = params_.data();
  if (h == 0) {
    affine(p, p + t * d, features, t, logits.data());
    return;
  }
  std::vector<double> hidden(h);
  affine(p, p + h * d, features, h, hidden.data());
  for (double& v : hidden) v = std::tanh(v);
  const double* w2 = p + h * d + h;
  affine(w2, w2 + t * h, hidden, t, logits.data());
}

double Learner::accumulate_gradient(std::span<const double> features,
                                    std::span<const double> target,
                                    std::span<double> gradient) const {
  check_input(features);
  require(gradient.size() == params_.size(), "gradient buffer has wrong length");
  const int d = input_dim_, h = config_.hidden_units, t = num_classes_;
  const double* p = params_.data();
  std::vector<double> logits(t), dlogits(t);

  if (h == 0) {
    affine(p, p + t * d, features, t, logits.data());
    const double loss = bce_loss(logits, target, dlogits);
    double* gw = gradient.data();
    double* gb = gw + t * d;
    for (int c = 0; c < t; ++c) {
      const double g = dlogits[c];
      double* row = gw + static_cast<std::size_t>(c) * d;
      for (int j = 0; j < d; ++j) row[j] += g * features[j];
      gb[c] += g;
    }
    return loss;
  }

  std::vector<double> hidden(h);
  affine(p, p + h * d, features, h, hidden.data());
  for (double& v : hidden) v = std::tanh(v);
  const double* w2 = p + h * d + h;
  affine(w2, w2 + t * h, hidden, t, logits.data());
  const double loss = bce_loss(logits, target, dlogits);

  double* gw1 = gradient.data();
  double* gb1 = gw1 + h * d;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + t * h;
  std::vector<double> dhidden(h, 0.0);
  for (int c = 0; c < t; ++c) {
    const double g = dlogits[c];
    const double* w2row = w2 + static_cast<std::size_t>(c) * h;
    double* grow = gw2 + static_cast<std::size_t>(c) * h;
    for (int k = 0; k < h; ++k) {
      grow[k] += g * hidden[k];
      dhidden[k] += g * w2row[k];
    }
    gb2[c] += g;
  }
  for (int k = 0; k < h; ++k) {
    const double da = dhidden[k] * (1.0 - hidden[k] * hidden[k]);
    double* row = gw1 + static_cast<std::size_t>(k) * d;
    for (int j = 0; j < d; ++j) row[j] += da * features[j];
    gb1[k] += da;
  }
  return loss;
}

bool Learner::finite() const {
  for (double v : params_)
    if (!std::isfinite(v)) return false;
  return true;
}

void TrainingSet::add(std::span<const double> features, std::span<const double> target) {
  require(static_cast<int>(features.size()) == input_dim_, "training feature length mismatch");
  require(static_cast<int>(target.size()) == num_classes_, "training target length mismatch");
  features_.insert(features_.end(), features.begin(), features.end());
  targets_.insert(targets_.end(), target.begin(), target.end());
}

void TrainSchedule::validate() const {
  require(phase1_epochs >= 0 && phase2_epochs >= 0, "epoch counts must be nonnegative");
  require(batch_size >= 1, "batch size must be at least 1");
  require(lr_phase1 > 0 && lr_phase2_max > 0 && lr_phase2_min > 0,
          "learning rates must be positive");
  require(lr_phase2_min <= lr_phase2_max, "lr_phase2_min must not exceed lr_phase2_max");
}

TrainResult train(Learner& learner, const TrainingSet& data, const TrainSchedule& schedule,
                  WeightedLoader* loader, std::uint64_t seed,
                  const OptimizerSettings& optimizer) {
  schedule.validate();
  TrainResult result;
  if (schedule.total_epochs() == 0) return result;
  require(!data.empty(), "training data is empty");
  require(data.input_dim() == learner.input_dim() && data.num_classes() == learner.num_classes(),
          "training data does not match learner dimensions");
  if (loader) require(loader->size() == data.size(), "loader does not cover the training data");

  const std::size_t n = data.size();
  const auto batch = static_cast<std::size_t>(schedule.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t phase2_steps = steps_per_epoch * static_cast<std::size_t>(schedule.phase2_epochs);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  auto params = learner.parameters();
  std::vector<double> grad(params.size()), m(params.size(), 0.0), v(params.size(), 0.0);
  double beta1_pow = 1.0, beta2_pow = 1.0;
  std::size_t phase2_step = 0;

  for (int epoch = 0; epoch < schedule.total_epochs(); ++epoch) {
    const bool phase2 = epoch >= schedule.phase1_epochs;
    if (!loader) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<std::size_t> rows;
      if (loader) {
        rows = loader->draw_batch(batch);
      } else {
        const std::size_t begin = step * batch, end = std::min(n, begin + batch);
        rows.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                    order.begin() + static_cast<std::ptrdiff_t>(end));
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t r : rows) loss += learner.accumulate_gradient(data.features(r), data.target(r), grad);
      const double inv = 1.0 / static_cast<double>(rows.size());
      loss *= inv;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << step
            << " (hidden_units=" << learner.config().hidden_units << ", lr schedule "
            << schedule.lr_phase1 << "/" << schedule.lr_phase2_max << ")";
        fail(ErrorKind::kNumerical, msg.str());
      }
      epoch_loss += loss;

      double lr = schedule.lr_phase1;
      if (phase2) {
        const double frac = phase2_steps > 1
                                ? static_cast<double>(phase2_step) / static_cast<double>(phase2_steps - 1)
                                : 0.0;
        lr = schedule.lr_phase2_max + (schedule.lr_phase2_min - schedule.lr_phase2_max) * frac;
        ++phase2_step;
      }
      beta1_pow *= optimizer.beta1;
      beta2_pow *= optimizer.beta2;
      const double c1 = 1.0 / (1.0 - beta1_pow), c2 = 1.0 / (1.0 - beta2_pow);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] * inv;
        m[i] = optimizer.beta1 * m[i] + (1.0 - optimizer.beta1) * g;
        v[i] = optimizer.beta2 * v[i] + (1.0 - optimizer.beta2) * g * g;
        params[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + optimizer.epsilon);
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  if (!learner.finite()) fail(ErrorKind::kNumerical, "non-finite parameters after training");
  return result;
}

std::string serialize_learner(const Learner& learner) {
  std::ostringstream body;
  const auto& cfg = learner.config();
  body << "noisyal-learner v1\n"
       << "hidden_units=" << cfg.hidden_units << '\n'
       << "seed=" << cfg.seed << '\n'
       << "init_scale=" << format_real(cfg.init_scale) << '\n'
       << "input_dim=" << learner.input_dim() << '\n'
       << "num_classes=" << learner.num_classes() << '\n'
       << "parameters=" << join_reals(learner.parameters()) << '\n';
  std::string text = body.str();
  text += "hash=" + content_hash(text) + "\n";
  return text;
}

namespace {

std::string_view take_line(std::string_view& text) {
  auto nl = text.find('\n');
  if (nl == std::string_view::npos) fail(ErrorKind::kParse, "checkpoint truncated");
  auto line = text.substr(0, nl);
  text.remove_prefix(nl + 1);
  return line;
}

std::string_view value_of(std::string_view line, std::string_view key) {
  if (line.substr(0, key.size()) != key || line.size() <= key.size() || line[key.size()] != '=')
    fail(ErrorKind::kParse, "checkpoint: expected key '" + std::string(key) + "'");
  return line.substr(key.size() + 1);
}

template <typename Int>
Int parse_integer(std::string_view token) {
  Int value{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
    fail(ErrorKind::kParse, "checkpoint: bad integer '" + std::string(token) + "'");
  return value;
}

}  // namespace

Learner deserialize_learner(std::string_view text) {
  const auto hash_pos = text.rfind("hash=");
  if (hash_pos == std::string_view::npos) fail(ErrorKind::kParse, "checkpoint: missing hash");
  const auto body = text.substr(0, hash_pos);
  auto stored = text.substr(hash_pos + 5);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.remove_suffix(1);
  if (content_hash(body) != stored) fail(ErrorKind::kParse, "checkpoint: content hash mismatch");

  std::string_view rest = body;
  if (take_line(rest) != "noisyal-learner v1") fail(ErrorKind::kParse, "checkpoint: bad header");
  LearnerConfig cfg;
  cfg.hidden_units = parse_integer<int>(value_of(take_line(rest), "hidden_units"));
  cfg.seed = parse_integer<std::uint64_t>(value_of(take_line(rest), "seed"));
  cfg.init_scale = parse_real(value_of(take_line(rest), "init_scale"));
  const int input_dim = parse_integer<int>(value_of(take_line(rest), "input_dim"));
  const int num_classes = parse_integer<int>(value_of(take_line(rest), "num_classes"));
  const auto values = split_reals(value_of(take_line(rest), "parameters"));

  Learner learner(cfg, input_dim, num_classes);
  if (values.size() != learner.parameter_count())
    fail(ErrorKind::kParse, "checkpoint: parameter count mismatch");
  std::copy(values.begin(), values.end(), learner.parameters().begin());
  return learner;
}

void save_learner(const Learner& learner, const std::filesystem::path& path) {
  write_file(path, serialize_learner(learner));
}

Learner load_learner(const std::filesystem::path& path) {
  return deserialize_learner(read_file(path));
}

}  // namespace noisyal
