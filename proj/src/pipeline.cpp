#include "noisyal/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "noisyal/annotation_service.hpp"
#include "noisyal/error.hpp"
#include "noisyal/hash.hpp"
#include "noisyal/http_service.hpp"
#include "noisyal/manifest.hpp"
#include "noisyal/metrics.hpp"
#include "noisyal/self_training.hpp"

namespace noisyal {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(std::string_view key, const std::string& why) {
  fail(ErrorKind::kConfig, "config key '" + std::string(key) + "': " + why);
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    config_error(key, "expected an integer, got '" + std::string(text) + "'");
  return value;
}

double parse_double(std::string_view key, std::string_view text) {
  try {
    return parse_real(text);
  } catch (const Error&) {
    config_error(key, "expected a number, got '" + std::string(text) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  config_error(key, "expected true or false, got '" + std::string(text) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define NOISYAL_INT_KEY(NAME, FIELD)                                                  \
  Key{NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },               \
      [](RunConfig& c, std::string_view v) {                                          \
        c.FIELD = parse_integer<std::remove_cvref_t<decltype(c.FIELD)>>(NAME, v);     \
      }}
#define NOISYAL_REAL_KEY(NAME, FIELD)                                                 \
  Key{NAME, [](const RunConfig& c) { return format_real(c.FIELD); },                  \
      [](RunConfig& c, std::string_view v) { c.FIELD = parse_double(NAME, v); }}
#define NOISYAL_BOOL_KEY(NAME, FIELD)                                                 \
  Key{NAME, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }, \
      [](RunConfig& c, std::string_view v) { c.FIELD = parse_bool(NAME, v); }}

// Hashed keys in canonical order.
const std::vector<Key>& hashed_keys() {
  static const std::vector<Key> keys = {
      NOISYAL_INT_KEY("seed", seed),
      Key{"dataset.manifest", [](const RunConfig& c) { return c.manifest; },
          [](RunConfig& c, std::string_view v) { c.manifest = std::string(v); }},
      NOISYAL_INT_KEY("dataset.classes", bench.num_classes),
      NOISYAL_INT_KEY("dataset.dim", bench.feature_dim),
      NOISYAL_INT_KEY("dataset.groups", bench.noise.groups),
      NOISYAL_INT_KEY("dataset.frames_min", bench.noise.frames_min),
      NOISYAL_INT_KEY("dataset.frames_max", bench.noise.frames_max),
      NOISYAL_REAL_KEY("noise.p_absent", bench.noise.p_absent),
      NOISYAL_REAL_KEY("noise.p_spurious", bench.noise.p_spurious),
      NOISYAL_REAL_KEY("noise.imbalance_exponent", bench.noise.imbalance_exponent),
      NOISYAL_REAL_KEY("noise.signal_scale", bench.noise.signal_scale),
      NOISYAL_REAL_KEY("noise.feature_noise", bench.noise.feature_noise),
      NOISYAL_REAL_KEY("noise.installed_cue_scale", bench.noise.installed_cue_scale),
      NOISYAL_REAL_KEY("split.test_fraction", bench.test_fraction),
      Key{"ensemble.hidden", [](const RunConfig& c) { return join_ints(c.bench.member_hidden); },
          [](RunConfig& c, std::string_view v) {
            c.bench.member_hidden.clear();
            std::size_t start = 0;
            while (start <= v.size()) {
              const std::size_t comma = std::min(v.find(',', start), v.size());
              c.bench.member_hidden.push_back(
                  parse_integer<int>("ensemble.hidden", trim(v.substr(start, comma - start))));
              start = comma + 1;
            }
          }},
      NOISYAL_REAL_KEY("ensemble.init_scale", bench.member_init_scale),
      NOISYAL_INT_KEY("train.phase1_epochs", bench.schedule.phase1_epochs),
      NOISYAL_INT_KEY("train.phase2_epochs", bench.schedule.phase2_epochs),
      NOISYAL_REAL_KEY("train.lr", bench.schedule.lr_phase1),
      NOISYAL_REAL_KEY("train.lr_phase2_max", bench.schedule.lr_phase2_max),
      NOISYAL_REAL_KEY("train.lr_phase2_min", bench.schedule.lr_phase2_min),
      NOISYAL_INT_KEY("train.batch_size", bench.schedule.batch_size),
      NOISYAL_INT_KEY("al.k_target", bench.al.k_target),
      NOISYAL_INT_KEY("al.per_iteration", bench.al.per_iteration),
      NOISYAL_INT_KEY("al.finetune_batch", bench.al.finetune_batch),
      NOISYAL_INT_KEY("al.finetune_epochs", bench.al.finetune_epochs),
      NOISYAL_REAL_KEY("al.finetune_lr", bench.al.finetune_lr),
      NOISYAL_INT_KEY("al.max_iterations", bench.al.max_iterations),
      NOISYAL_BOOL_KEY("al.from_scratch", bench.al.from_scratch),
      NOISYAL_REAL_KEY("al.clean_train_fraction", bench.al.clean_train_fraction),
      NOISYAL_INT_KEY("al.max_requeues", bench.al.max_requeues),
      Key{"oracle.kind", [](const RunConfig& c) { return c.oracle; },
          [](RunConfig& c, std::string_view v) { c.oracle = std::string(v); }},
      NOISYAL_REAL_KEY("oracle.flip_rate", oracle_flip_rate),
      NOISYAL_BOOL_KEY("teacher.from_al", bench.teacher_from_al),
      NOISYAL_INT_KEY("teacher.phase1_epochs", bench.teacher_schedule.phase1_epochs),
      NOISYAL_INT_KEY("teacher.phase2_epochs", bench.teacher_schedule.phase2_epochs),
      NOISYAL_BOOL_KEY("student.warm_start", bench.student.warm_start),
      NOISYAL_INT_KEY("student.phase1_epochs", bench.student.schedule.phase1_epochs),
      NOISYAL_INT_KEY("student.phase2_epochs", bench.student.schedule.phase2_epochs),
      NOISYAL_INT_KEY("student.finetune_epochs", bench.student.finetune_epochs),
      NOISYAL_REAL_KEY("student.finetune_lr", bench.student.finetune_lr),
      NOISYAL_INT_KEY("student.finetune_batch", bench.student.finetune_batch),
      Key{"student.pseudo_mode",
          [](const RunConfig& c) {
            return std::string(c.bench.student.pseudo_mode == PseudoTargetMode::kSoft ? "soft" : "hard");
          },
          [](RunConfig& c, std::string_view v) {
            if (v == "soft") c.bench.student.pseudo_mode = PseudoTargetMode::kSoft;
            else if (v == "hard") c.bench.student.pseudo_mode = PseudoTargetMode::kHardTop3;
            else config_error("student.pseudo_mode", "expected soft or hard");
          }},
      Key{"student.wdl_reduction",
          [](const RunConfig& c) {
            return std::string(c.bench.student.reduction == WeightReduction::kMean ? "mean" : "max");
          },
          [](RunConfig& c, std::string_view v) {
            if (v == "mean") c.bench.student.reduction = WeightReduction::kMean;
            else if (v == "max") c.bench.student.reduction = WeightReduction::kMax;
            else config_error("student.wdl_reduction", "expected mean or max");
          }},
      Key{"serve.host", [](const RunConfig& c) { return c.serve_host; },
          [](RunConfig& c, std::string_view v) { c.serve_host = std::string(v); }},
      NOISYAL_INT_KEY("serve.port", serve_port),
      NOISYAL_INT_KEY("serve.lease_ttl", lease_ttl),
  };
  return keys;
}

#undef NOISYAL_INT_KEY
#undef NOISYAL_REAL_KEY
#undef NOISYAL_BOOL_KEY

// Teacher and student runs reuse the shared learning rates and batch size.
void sync_schedules(RunConfig& cfg) {
  for (TrainSchedule* s : {&cfg.bench.teacher_schedule, &cfg.bench.student.schedule}) {
    s->lr_phase1 = cfg.bench.schedule.lr_phase1;
    s->lr_phase2_max = cfg.bench.schedule.lr_phase2_max;
    s->lr_phase2_min = cfg.bench.schedule.lr_phase2_min;
    s->batch_size = cfg.bench.schedule.batch_size;
  }
}

}  // namespace

void RunConfig::validate() const {
  try {
    require(bench.num_classes >= 4, "dataset.classes must be at least 4");
    require(bench.feature_dim >= 1, "dataset.dim must be positive");
    require(bench.test_fraction > 0.0 && bench.test_fraction < 1.0,
            "split.test_fraction must lie in (0,1)");
    require(!bench.member_hidden.empty(), "ensemble.hidden must list at least one member");
    for (int h : bench.member_hidden) require(h >= 0, "ensemble.hidden entries must be nonnegative");
    bench.schedule.validate();
    bench.teacher_schedule.validate();
    bench.al.validate();
    bench.student.validate();
    require(oracle == "scripted" || oracle == "noisy" || oracle == "serve",
            "oracle.kind must be scripted, noisy or serve");
    require(oracle_flip_rate >= 0.0 && oracle_flip_rate <= 1.0, "oracle.flip_rate must lie in [0,1]");
    require(serve_port >= 0 && serve_port < 65536, "serve.port out of range");
    require(lease_ttl > 0, "serve.lease_ttl must be positive");
    if (label_smoothing)
      require(*label_smoothing > 0.5 && *label_smoothing <= 1.0, "label smoothing p must lie in (0.5, 1]");
    if (!manifest.empty() && !fs::exists(manifest))
      fail(ErrorKind::kConfig, "dataset.manifest '" + manifest + "' does not exist");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    fail(ErrorKind::kConfig, e.what());
  }
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "student.wdl") {
    cfg.wdl = parse_bool(key, value);
    return;
  }
  if (key == "student.label_smoothing") {
    if (value == "none" || value == "0") cfg.label_smoothing.reset();
    else cfg.label_smoothing = parse_double(key, value);
    return;
  }
  for (const Key& k : hashed_keys())
    if (key == k.name) {
      k.set(cfg, value);
      sync_schedules(cfg);
      return;
    }
  config_error(key, "unknown key");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  sync_schedules(cfg);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kConfig, "config file " + path.string() + " not found");
  return parse_run_config(read_file(path));
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : hashed_keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

// Serving settings do not change any artifact, so they stay out of the hash.
std::string config_hash(const RunConfig& cfg) {
  std::string text;
  for (const Key& k : hashed_keys())
    if (!std::string_view(k.name).starts_with("serve."))
      text += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return content_hash(text);
}

std::string student_stage_name(const RunConfig& cfg) {
  std::string name = "student";
  if (cfg.label_smoothing) name += "-smooth";
  if (cfg.wdl) name += "-wdl";
  return name;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kMissingArtifact: return 3;
    case ErrorKind::kNumerical: return 4;
    default: return 1;
  }
}

// ---------------------------------------------------------------------------

namespace {

const char* kStageFile = "stage.json";

// Student variants in report order, after the fixed stages.
const std::vector<std::string>& student_variants() {
  static const std::vector<std::string> v = {"student", "student-smooth", "student-wdl",
                                             "student-smooth-wdl"};
  return v;
}

std::vector<SampleId> ids_from(const ordered_json& j) { return j.get<std::vector<SampleId>>(); }

ordered_json read_json(const fs::path& path) {
  try {
    return ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

std::string file_hash(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::string joined;
    for (const auto& f : files) joined += f.filename().string() + ":" + content_hash(read_file(f)) + "\n";
    return content_hash(joined);
  }
  return content_hash(read_file(path));
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, fs::path run_dir, std::ostream& log)
    : cfg_(std::move(cfg)), dir_(std::move(run_dir)), log_(log) {
  sync_schedules(cfg_);
  cfg_.validate();
  hash_ = config_hash(cfg_);
  fs::create_directories(dir_);
  write_file(dir_ / "config.txt", "# config hash " + hash_ + "\n" + format_run_config(cfg_));
}

std::optional<Pipeline::Fingerprint> Pipeline::stage_fingerprint(const std::string& stage) const {
  const fs::path file = stage_dir(stage) / kStageFile;
  if (!fs::exists(file)) return std::nullopt;
  return Fingerprint{stage, content_hash(read_file(file))};
}

Pipeline::Fingerprint Pipeline::require_stage(const std::string& stage, const std::string& needed_by) const {
  const auto fp = stage_fingerprint(stage);
  if (!fp)
    fail(ErrorKind::kMissingArtifact, needed_by + " needs " + (stage_dir(stage) / kStageFile).string() +
                                          "; run `noisyal " + (stage.starts_with("student") ? "student" : stage) +
                                          "` first");
  const auto j = read_json(stage_dir(stage) / kStageFile);
  if (j.at("config_hash").get<std::string>() != hash_)
    fail(ErrorKind::kMissingArtifact, needed_by + " needs stage '" + stage +
                                          "' built with config " + hash_ + ", found " +
                                          j.at("config_hash").get<std::string>() + "; rerun it");
  return *fp;
}

bool Pipeline::up_to_date(const std::string& stage, const std::vector<Fingerprint>& inputs) const {
  const fs::path file = stage_dir(stage) / kStageFile;
  if (!fs::exists(file)) return false;
  ordered_json j;
  try {
    j = read_json(file);
  } catch (const Error&) {
    return false;
  }
  if (j.value("config_hash", "") != hash_) return false;
  ordered_json expected = ordered_json::object();
  for (const auto& in : inputs) expected[in.stage] = in.value;
  if (j.value("inputs", ordered_json::object()) != expected) return false;
  const ordered_json outputs = j.value("outputs", ordered_json::object());
  for (const auto& [name, hash] : outputs.items()) {
    const fs::path out = stage_dir(stage) / name;
    if (!fs::exists(out) || file_hash(out) != hash.get<std::string>()) return false;
  }
  log_ << stage << ": up to date (config " << hash_ << ")\n";
  return true;
}

void Pipeline::finish_stage(const std::string& stage, const std::vector<Fingerprint>& inputs,
                            const std::vector<std::string>& outputs) const {
  ordered_json j;
  j["stage"] = stage;
  j["config_hash"] = hash_;
  j["inputs"] = ordered_json::object();
  for (const auto& in : inputs) j["inputs"][in.stage] = in.value;
  j["outputs"] = ordered_json::object();
  for (const auto& name : outputs) j["outputs"][name] = file_hash(stage_dir(stage) / name);
  write_file(stage_dir(stage) / kStageFile, j.dump(2) + "\n");
  log_ << stage << ": done (config " << hash_ << ")\n";
}

// ---------------------------------------------------------------------------

namespace {

Dataset load_stage_dataset(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kMissingArtifact, "missing artifact " + path.string());
  return load_manifest(path);
}

struct SplitIds {
  std::vector<SampleId> train, test;
};

SplitIds load_split(const fs::path& path) {
  const auto j = read_json(path);
  return {ids_from(j.at("train_ids")), ids_from(j.at("test_ids"))};
}

CleanSet load_clean_set(const fs::path& path) {
  const auto j = read_json(path);
  return {ids_from(j.at("ids")), ids_from(j.at("train_ids")), ids_from(j.at("validation_ids"))};
}

std::string report_file_json(const EvaluationReport& report, const std::string& hash, std::uint64_t seed) {
  ordered_json j;
  j["config_hash"] = hash;
  j["seed"] = seed;
  j["report"] = ordered_json::parse(report_to_json(report));
  return j.dump(2) + "\n";
}

const std::map<std::string, std::string>& report_names() {
  static const std::map<std::string, std::string> names = {
      {"baseline", "noisy-baseline"}, {"al", "al-clean"}, {"teacher", "teacher"},
      {"student", "student"}, {"student-smooth", "student-smooth"},
      {"student-wdl", "student-wdl"}, {"student-smooth-wdl", "student-smooth-wdl"}};
  return names;
}

}  // namespace

StageStatus Pipeline::datagen() {
  const std::string stage = "datagen";
  std::vector<Fingerprint> inputs;
  if (!cfg_.manifest.empty()) inputs.push_back({"manifest", file_hash(cfg_.manifest)});
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;

  const auto& b = cfg_.bench;
  Dataset ds;
  if (cfg_.manifest.empty()) {
    ds = generate_synthetic(b.noise, b.feature_dim, b.num_classes, derive_seed(cfg_.seed, 1));
  } else {
    ds = load_manifest(cfg_.manifest);
    if (ds.num_classes() != b.num_classes || ds.feature_dim() != b.feature_dim)
      fail(ErrorKind::kConfig, "manifest has classes=" + std::to_string(ds.num_classes()) +
                                   " dim=" + std::to_string(ds.feature_dim()) +
                                   " but the config says classes=" + std::to_string(b.num_classes) +
                                   " dim=" + std::to_string(b.feature_dim));
  }
  fs::create_directories(stage_dir(stage));
  save_manifest(ds, stage_dir(stage) / "dataset.tsv");

  ordered_json summary;
  summary["samples"] = ds.size();
  summary["groups"] = ds.groups().size();
  summary["combos"] = ds.combo_index().size();
  summary["classes"] = ds.num_classes();
  summary["dim"] = ds.feature_dim();
  summary["dataset_hash"] = dataset_hash(ds);
  summary["assigned_per_class"] = class_distribution(ds);
  const double noisy = noisy_fraction(ds);
  summary["noisy_fraction"] = noisy;
  if (cfg_.manifest.empty() && b.noise.p_spurious == 0.0) {
    const double q = 1.0 - b.noise.p_absent;
    summary["expected_noisy_fraction"] = 1.0 - q * q * q;
  }
  write_file(stage_dir(stage) / "summary.json", summary.dump(2) + "\n");
  log_ << stage << ": " << ds.size() << " samples, " << ds.groups().size() << " groups, noisy fraction "
       << format_real(noisy) << "\n";
  finish_stage(stage, inputs, {"dataset.tsv", "summary.json"});
  return StageStatus::kRan;
}

StageStatus Pipeline::split() {
  const std::string stage = "split";
  const std::vector<Fingerprint> inputs = {require_stage("datagen", stage)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset ds = load_stage_dataset(stage_dir("datagen") / "dataset.tsv");
  const DataSplit s = group_aware_split(ds, cfg_.bench.test_fraction, derive_seed(cfg_.seed, 2));
  ordered_json j;
  j["test_fraction"] = cfg_.bench.test_fraction;
  j["test_mass"] = static_cast<double>(s.test_ids.size()) / static_cast<double>(ds.size());
  j["singleton_combos"] = ordered_json::array();
  for (const auto& combo : s.singleton_combos) j["singleton_combos"].push_back(combo.ids());
  j["train_ids"] = s.train_ids;
  j["test_ids"] = s.test_ids;
  fs::create_directories(stage_dir(stage));
  write_file(stage_dir(stage) / "split.json", j.dump() + "\n");
  log_ << stage << ": " << s.train_ids.size() << " train, " << s.test_ids.size() << " test\n";
  finish_stage(stage, inputs, {"split.json"});
  return StageStatus::kRan;
}

StageStatus Pipeline::baseline() {
  const std::string stage = "baseline";
  const std::vector<Fingerprint> inputs = {require_stage("datagen", stage), require_stage("split", stage)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset ds = load_stage_dataset(stage_dir("datagen") / "dataset.tsv");
  const Dataset train = ds.subset(load_split(stage_dir("split") / "split.json").train);
  const auto& b = cfg_.bench;
  const auto members = member_configs(b.member_hidden, derive_seed(cfg_.seed, 3), b.member_init_scale);
  Ensemble e = make_ensemble(members, b.feature_dim, b.num_classes);
  train_ensemble(e, hard_training_set(train), b.schedule, derive_seed(cfg_.seed, 4));
  save_ensemble(e, stage_dir(stage) / "ensemble");
  finish_stage(stage, inputs, {"ensemble"});
  return StageStatus::kRan;
}

StageStatus Pipeline::al(Oracle* oracle) { return run_al("al", oracle, !oracle && cfg_.oracle == "serve"); }

StageStatus Pipeline::serve() { return run_al("serve", nullptr, true); }

StageStatus Pipeline::run_al(const std::string& label, Oracle* oracle, bool serve) {
  const std::string stage = "al";
  const std::vector<Fingerprint> inputs = {require_stage("datagen", label), require_stage("split", label),
                                           require_stage("baseline", label)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset ds = load_stage_dataset(stage_dir("datagen") / "dataset.tsv");
  const Dataset train = ds.subset(load_split(stage_dir("split") / "split.json").train);
  ALState state(train, load_ensemble(stage_dir("baseline") / "ensemble"), cfg_.bench.al, cfg_.bench.schedule,
                derive_seed(cfg_.seed, 5));
  const fs::path dir = stage_dir(stage);
  fs::create_directories(dir);
  fs::remove(dir / kStageFile);
  fs::remove(dir / "audit.jsonl");

  if (serve) {
    ServiceOptions options;
    options.run_id = hash_;
    options.lease_ttl_seconds = cfg_.lease_ttl;
    options.audit_path = dir / "audit.jsonl";
    AnnotationService service(state, options);
    HttpServer server(service);
    const int port = server.bind(cfg_.serve_host, cfg_.serve_port);
    log_ << label << ": annotation service on http://" << cfg_.serve_host << ":" << port << "\n" << std::flush;
    std::thread worker([&] { server.listen(); });
    server.wait_until_ready();
    while (!service.finished()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    worker.join();
  } else {
    std::unique_ptr<Oracle> owned;
    if (!oracle) {
      if (cfg_.oracle == "noisy")
        owned = std::make_unique<NoisyOracle>(cfg_.oracle_flip_rate, cfg_.bench.num_classes,
                                              derive_seed(cfg_.seed, 8));
      else
        owned = std::make_unique<ScriptedOracle>();
      oracle = owned.get();
    }
    run_al_loop(state, *oracle);
    write_file(dir / "audit.jsonl", format_audit_log(state.audit_log()));
  }

  const CleanSet clean = state.clean_set();
  save_ensemble(state.ensemble(), dir / "ensemble");
  save_manifest(state.dataset(), dir / "pool.tsv");
  std::string effort = "iteration\treviewed\tchanged\tclean_size\n";
  for (const auto& h : state.history())
    effort += std::to_string(h.iteration) + "\t" + std::to_string(h.reviewed) + "\t" +
              std::to_string(h.changed) + "\t" + std::to_string(h.clean_size) + "\n";
  write_file(dir / "effort.tsv", effort);
  ordered_json cs;
  cs["ids"] = clean.ids;
  cs["train_ids"] = clean.train_ids;
  cs["validation_ids"] = clean.validation_ids;
  write_file(dir / "clean_set.json", cs.dump() + "\n");
  std::string warnings;
  for (const auto& w : state.warnings()) {
    warnings += w + "\n";
    log_ << label << ": warning: " << w << "\n";
  }
  write_file(dir / "warnings.txt", warnings);
  log_ << label << ": " << state.history().size() << " iterations, clean set " << clean.ids.size() << "\n";
  finish_stage(stage, inputs,
               {"ensemble", "pool.tsv", "audit.jsonl", "effort.tsv", "clean_set.json", "warnings.txt"});
  return StageStatus::kRan;
}

StageStatus Pipeline::teacher() {
  const std::string stage = "teacher";
  const std::vector<Fingerprint> inputs = {require_stage("al", stage)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset pool = load_stage_dataset(stage_dir("al") / "pool.tsv");
  const CleanSet clean = load_clean_set(stage_dir("al") / "clean_set.json");
  const auto& b = cfg_.bench;
  StageConfig tcfg;
  tcfg.schedule = b.teacher_schedule;
  std::optional<Ensemble> init;
  if (b.teacher_from_al) init = load_ensemble(stage_dir("al") / "ensemble");
  const auto members = member_configs(b.member_hidden, derive_seed(cfg_.seed, 3), b.member_init_scale);
  const TeacherResult result = train_teacher(tcfg, pool.subset(clean.train_ids), pool.subset(clean.validation_ids),
                                             members, derive_seed(cfg_.seed, 6), init ? &*init : nullptr);
  save_ensemble(result.ensemble, stage_dir(stage) / "ensemble");
  write_file(stage_dir(stage) / "validation.json", report_to_json(result.validation) + "\n");
  log_ << stage << ": validation macro-F1 " << format_real(result.validation.macro_f1) << "\n";
  finish_stage(stage, inputs, {"ensemble", "validation.json"});
  return StageStatus::kRan;
}

StageStatus Pipeline::pseudo() {
  const std::string stage = "pseudo";
  const std::vector<Fingerprint> inputs = {require_stage("al", stage), require_stage("teacher", stage)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset pool = load_stage_dataset(stage_dir("al") / "pool.tsv");
  const CleanSet clean = load_clean_set(stage_dir("al") / "clean_set.json");
  const std::set<SampleId> clean_ids(clean.ids.begin(), clean.ids.end());
  std::vector<SampleId> unclean;
  for (const Sample& s : pool.samples())
    if (!clean_ids.count(s.sample_id)) unclean.push_back(s.sample_id);
  const Dataset labelled = pseudo_label(load_ensemble(stage_dir("teacher") / "ensemble"), pool.subset(unclean));
  fs::create_directories(stage_dir(stage));
  save_manifest(labelled, stage_dir(stage) / "pseudo.tsv");
  log_ << stage << ": " << labelled.size() << " pseudo-labelled samples\n";
  finish_stage(stage, inputs, {"pseudo.tsv"});
  return StageStatus::kRan;
}

StageStatus Pipeline::student() {
  const std::string stage = student_stage_name(cfg_);
  const std::vector<Fingerprint> inputs = {require_stage("al", stage), require_stage("teacher", stage),
                                           require_stage("pseudo", stage)};
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;
  const Dataset pool = load_stage_dataset(stage_dir("al") / "pool.tsv");
  const CleanSet clean = load_clean_set(stage_dir("al") / "clean_set.json");
  const Dataset labelled = load_stage_dataset(stage_dir("pseudo") / "pseudo.tsv");
  const Ensemble teacher_ensemble = load_ensemble(stage_dir("teacher") / "ensemble");
  const auto& b = cfg_.bench;
  StageConfig sc = b.student;
  sc.use_weighted_loader = cfg_.wdl;
  sc.use_label_smoothing = cfg_.label_smoothing.has_value();
  if (cfg_.label_smoothing) sc.smoothing_p = *cfg_.label_smoothing;
  const auto members = member_configs(b.member_hidden, derive_seed(cfg_.seed, 3), b.member_init_scale);
  const StudentResult result = train_student(sc, labelled, pool.subset(clean.train_ids), members,
                                             &teacher_ensemble, derive_seed(cfg_.seed, 7));
  save_ensemble(result.ensemble, stage_dir(stage) / "ensemble");
  // Class weights behind the fine-tuning loader, kept for audit.
  ordered_json weights;
  weights["wdl"] = cfg_.wdl;
  weights["reduction"] = sc.reduction == WeightReduction::kMean ? "mean" : "max";
  weights["class_weights"] = result.class_weights;
  write_file(stage_dir(stage) / "class_weights.json", weights.dump(2) + "\n");
  finish_stage(stage, inputs, {"ensemble", "class_weights.json"});
  return StageStatus::kRan;
}

StageStatus Pipeline::eval(const std::optional<fs::path>& predictions) {
  const std::string stage = "eval";
  std::vector<Fingerprint> inputs = {require_stage("datagen", stage), require_stage("split", stage)};
  const Dataset ds = load_stage_dataset(stage_dir("datagen") / "dataset.tsv");
  const Dataset test = ds.subset(load_split(stage_dir("split") / "split.json").test);
  const fs::path dir = stage_dir(stage);

  if (predictions) {
    if (!fs::exists(*predictions)) fail(ErrorKind::kMissingArtifact, "predictions file " + predictions->string() + " not found");
    std::map<SampleId, LabelSet> by_id;
    std::istringstream in(read_file(*predictions));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) fail(ErrorKind::kParse, "predictions line without a tab: " + line);
      by_id[parse_integer<SampleId>("predictions", line.substr(0, tab))] =
          LabelSet::parse(line.substr(tab + 1) == "-" ? "" : line.substr(tab + 1));
    }
    std::vector<LabelSet> preds, truths;
    for (const Sample& s : test.samples()) {
      const auto it = by_id.find(s.sample_id);
      if (it == by_id.end())
        fail(ErrorKind::kMissingArtifact, "no prediction for test sample " + std::to_string(s.sample_id));
      preds.push_back(it->second);
      truths.push_back(s.true_labels);
    }
    EvaluationReport report = evaluate(preds, truths, test.num_classes());
    report.stage = predictions->stem().string();
    report.dataset_hash = dataset_hash(test);
    fs::create_directories(dir);
    write_file(dir / (report.stage + ".json"), report_file_json(report, hash_, cfg_.seed));
    write_file(dir / (report.stage + ".txt"), format_report(report));
    log_ << stage << ": " << report.stage << " macro-F1 " << format_real(report.macro_f1) << "\n";
    return StageStatus::kRan;
  }

  std::vector<std::string> trained;
  for (const auto& [dir_name, report_name] : report_names())
    if (const auto fp = stage_fingerprint(dir_name)) {
      require_stage(dir_name, stage);
      inputs.push_back(*fp);
      trained.push_back(dir_name);
    }
  if (trained.empty())
    fail(ErrorKind::kMissingArtifact, "eval found no trained stage in " + dir_.string() + "; run `noisyal baseline` first");
  if (up_to_date(stage, inputs)) return StageStatus::kSkipped;

  fs::create_directories(dir);
  std::vector<std::string> outputs;
  const auto emit = [&](const EvaluationReport& report) {
    write_file(dir / (report.stage + ".json"), report_file_json(report, hash_, cfg_.seed));
    write_file(dir / (report.stage + ".txt"), format_report(report));
    outputs.push_back(report.stage + ".json");
    outputs.push_back(report.stage + ".txt");
    log_ << stage << ": " << report.stage << " macro-F1 " << format_real(report.macro_f1) << "\n";
  };
  for (const auto& dir_name : trained) {
    const Ensemble e = load_ensemble(stage_dir(dir_name) / "ensemble");
    emit(evaluate_ensemble(e, test, EvalTarget::kTrueLabels, report_names().at(dir_name)));
    if (dir_name == "baseline")
      emit(evaluate_ensemble(e, test, EvalTarget::kAssignedLabels, "noisy-baseline-noisy-labels"));
  }
  finish_stage(stage, inputs, outputs);
  return StageStatus::kRan;
}

StageStatus Pipeline::report() {
  const std::string stage = "report";
  const fs::path eval_dir = stage_dir("eval");
  std::vector<fs::path> files;
  if (fs::exists(eval_dir))
    for (const auto& entry : fs::directory_iterator(eval_dir))
      if (entry.path().extension() == ".json" && entry.path().filename() != kStageFile)
        files.push_back(entry.path());
  if (files.empty())
    fail(ErrorKind::kMissingArtifact, "nothing to report in " + dir_.string() + "; run `noisyal eval` first");
  std::sort(files.begin(), files.end());

  std::map<std::string, EvaluationReport> reports;
  std::map<std::string, std::vector<std::string>> by_hash;
  for (const auto& f : files) {
    const auto j = read_json(f);
    const auto h = j.at("config_hash").get<std::string>();
    by_hash[h].push_back(f.filename().string());
    EvaluationReport r = report_from_json(j.at("report").dump());
    reports[r.stage] = std::move(r);
  }
  const bool has_al = fs::exists(stage_dir("al") / kStageFile);
  if (has_al) {
    const auto h = read_json(stage_dir("al") / kStageFile).at("config_hash").get<std::string>();
    by_hash[h].push_back("al/stage.json");
  }
  if (by_hash.size() > 1) {
    std::string detail;
    for (const auto& [h, names] : by_hash) {
      detail += "\n  " + h + ":";
      for (const auto& n : names) detail += " " + n;
    }
    fail(ErrorKind::kConfig, "refusing to report artifacts from different configs:" + detail);
  }
  if (by_hash.begin()->first != hash_)
    fail(ErrorKind::kConfig, "run dir holds config " + by_hash.begin()->first + " but this config is " + hash_);

  std::vector<EvaluationReport> ordered;
  std::set<std::string> used = {"noisy-baseline-noisy-labels"};
  for (const char* name : {"noisy-baseline", "al-clean", "teacher"})
    if (reports.count(name)) {
      ordered.push_back(reports.at(name));
      used.insert(name);
    }
  for (const auto& name : student_variants())
    if (reports.count(name)) {
      ordered.push_back(reports.at(name));
      used.insert(name);
    }
  for (const auto& [name, r] : reports)
    if (!used.count(name)) ordered.push_back(r);

  const fs::path dir = stage_dir(stage);
  fs::create_directories(dir);
  std::vector<std::string> outputs = {"comparison.txt", "comparison.json"};
  std::string text = "config " + hash_ + "  seed " + std::to_string(cfg_.seed) + "\n";
  const ComparisonTable table = compare_stages(ordered);
  text += format_comparison(table);
  if (reports.count("noisy-baseline") && reports.count("noisy-baseline-noisy-labels")) {
    const double clean_f1 = reports.at("noisy-baseline").macro_f1;
    const double noisy_f1 = reports.at("noisy-baseline-noisy-labels").macro_f1;
    text += "noisy-baseline macro-F1 against noisy labels " + format_real(noisy_f1) + " vs clean " +
            format_real(clean_f1) + " (inflation " + format_real(noisy_f1 - clean_f1) + ")\n";
  }
  write_file(dir / "comparison.txt", text);
  ordered_json cj;
  cj["config_hash"] = hash_;
  cj["seed"] = cfg_.seed;
  cj["table"] = ordered_json::parse(comparison_to_json(table));
  write_file(dir / "comparison.json", cj.dump(2) + "\n");

  if (has_al) {
    const auto records = read_audit_log(stage_dir("al") / "audit.jsonl");
    const CorrectionStats stats = correction_stats(records, cfg_.bench.num_classes);
    std::string effort = "iteration\treviewed\tchanged\n";
    std::vector<std::int64_t> trace;
    for (std::size_t i = 0; i < stats.changed_per_iteration.size(); ++i) {
      effort += std::to_string(i) + "\t" + std::to_string(stats.reviewed_per_iteration[i]) + "\t" +
                std::to_string(stats.changed_per_iteration[i]) + "\n";
      trace.push_back(stats.changed_per_iteration[i]);
    }
    if (trace.size() >= 3) {
      const TrendResult trend = trend_test(trace);
      effort += "# slope " + format_real(trend.slope) + (trend.pass ? " declining" : " not declining") + "\n";
    }
    write_file(dir / "effort.tsv", effort);
    std::string corrections = "class\tname\tcorrections\tfraction\n";
    const auto names = default_tool_labels(cfg_.bench.num_classes);
    for (int c = 0; c < cfg_.bench.num_classes && !stats.corrections_per_class.empty(); ++c)
      corrections += std::to_string(c) + "\t" + names[c].name + "\t" +
                     std::to_string(stats.corrections_per_class[c]) + "\t" +
                     format_real(stats.corrected_fraction_per_class[c]) + "\n";
    write_file(dir / "corrections.tsv", corrections);
    outputs.push_back("effort.tsv");
    outputs.push_back("corrections.tsv");
  }
  log_ << text;
  finish_stage(stage, {}, outputs);
  return StageStatus::kRan;
}

}  // namespace noisyal
