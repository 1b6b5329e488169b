#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noisyal/active_learning.hpp"
#include "noisyal/error.hpp"
#include "noisyal/experiments.hpp"

namespace noisyal {

/// Everything a run needs. Learning settings live in `bench`; the rest is
/// plumbing. `wdl` and `label_smoothing` pick the student variant and are
/// deliberately left out of the config hash so variants share one run dir;
/// so are the serve.* settings.
struct RunConfig {
  BenchmarkConfig bench;
  std::uint64_t seed = 1;
  /// Existing dataset manifest; empty means generate one.
  std::string manifest;
  std::string oracle = "scripted";
  double oracle_flip_rate = 0.1;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8765;
  std::int64_t lease_ttl = 120;

  bool wdl = false;
  std::optional<double> label_smoothing;

  /// Throws Error(kConfig).
  void validate() const;
};

/// Sets one key; throws Error(kConfig) for unknown keys or bad values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
/// Flat `key = value` lines; `#` starts a comment. Throws Error(kConfig).
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text of the keyed settings, one per line in a fixed order.
std::string format_run_config(const RunConfig& cfg);
/// Hash of format_run_config without the serve.* lines.
std::string config_hash(const RunConfig& cfg);
/// student, student-smooth, student-wdl or student-smooth-wdl.
std::string student_stage_name(const RunConfig& cfg);

enum class StageStatus { kRan, kSkipped };

/// Stage commands over one run directory. Each stage writes its outputs and a
/// stage.json listing the config hash, the fingerprints of the stages it read
/// and the hash of every output file. A stage whose stage.json still matches is
/// skipped. Missing prerequisites raise Error(kMissingArtifact).
class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::filesystem::path run_dir, std::ostream& log);

  StageStatus datagen();
  StageStatus split();
  StageStatus baseline();
  /// Uses the configured oracle unless one is passed in.
  StageStatus al(Oracle* oracle = nullptr);
  StageStatus teacher();
  StageStatus pseudo();
  StageStatus student();
  /// Evaluates every trained stage on the test split; with a predictions file
  /// (sample_id<TAB>labels per line) evaluates that instead under its stem.
  StageStatus eval(const std::optional<std::filesystem::path>& predictions = std::nullopt);
  StageStatus report();
  /// Label cleaning through the HTTP annotation service.
  StageStatus serve();

  const RunConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& run_dir() const { return dir_; }

 private:
  struct Fingerprint {
    std::string stage;
    std::string value;
  };

  std::filesystem::path stage_dir(const std::string& stage) const { return dir_ / stage; }
  Fingerprint require_stage(const std::string& stage, const std::string& needed_by) const;
  std::optional<Fingerprint> stage_fingerprint(const std::string& stage) const;
  bool up_to_date(const std::string& stage, const std::vector<Fingerprint>& inputs) const;
  void finish_stage(const std::string& stage, const std::vector<Fingerprint>& inputs,
                    const std::vector<std::string>& outputs) const;
  StageStatus run_al(const std::string& stage_label, Oracle* oracle, bool serve);

  RunConfig cfg_;
  std::filesystem::path dir_;
  std::ostream& log_;
  std::string hash_;
};

/// Maps an exception kind to the documented exit status
/// (0 ok, 2 config, 3 missing prerequisite, 4 numerical, 1 otherwise).
int exit_code_for(ErrorKind kind);

}  // namespace noisyal
