// noisyal: stage-by-stage driver for the label-cleaning and self-training pipeline.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noisyal/error.hpp"
#include "noisyal/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string oracle;
  bool wdl = false;
  std::optional<double> label_smoothing;
  std::vector<std::string> overrides;
  std::string predictions;
};

noisyal::RunConfig resolve(const Options& o) {
  noisyal::RunConfig cfg = o.config.empty() ? noisyal::RunConfig{} : noisyal::load_run_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      noisyal::fail(noisyal::ErrorKind::kConfig, "--set expects key=value, got '" + kv + "'");
    noisyal::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.oracle.empty()) cfg.oracle = o.oracle;
  if (o.wdl) cfg.wdl = true;
  if (o.label_smoothing) cfg.label_smoothing = o.label_smoothing;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy multi-label learning: label cleaning, teacher/student self-training, evaluation"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"datagen", "generate the synthetic dataset"},
      {"teacher", "train the teacher on the clean set"},
      {"pseudo", "pseudo-label the uncleaned samples"},
      {"student", "train the student (variant from --wdl / --label-smoothing)"},
      {"split", "group-aware train/test split"},
      {"baseline", "train the ensemble on the noisy labels"},
      {"al", "active label cleaning with the chosen oracle"},
      {"eval", "evaluate trained stages on the clean test split"},
      {"report", "comparison table, effort trace and correction stats"},
      {"serve", "run the annotation service for the al stage"},
      {"all", "datagen through report"}};
  std::vector<CLI::App*> subs;
  for (const auto& [verb, help] : verbs) {
    CLI::App* sub = app.add_subcommand(verb, help);
    sub->add_option("--config", o.config, "flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run seed (overrides the config)");
    sub->add_option("--out", o.out, "run directory")->capture_default_str();
    sub->add_option("--oracle", o.oracle, "label source for al")
        ->check(CLI::IsMember({"scripted", "noisy", "serve"}));
    sub->add_flag("--wdl", o.wdl, "student fine-tuning with the weighted data loader");
    sub->add_option("--label-smoothing", o.label_smoothing, "smooth clean student targets with p");
    sub->add_option("--set", o.overrides, "override one config key (key=value), repeatable");
    if (verb == "eval") sub->add_option("--predictions", o.predictions, "evaluate a sample_id<TAB>labels file");
    subs.push_back(sub);
  }
  app.footer("exit status: 0 ok, 2 config error, 3 missing prerequisite, 4 numerical failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    noisyal::Pipeline p(resolve(o), o.out, std::cout);
    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "datagen") p.datagen();
    else if (verb == "split") p.split();
    else if (verb == "baseline") p.baseline();
    else if (verb == "al") p.al();
    else if (verb == "serve") p.serve();
    else if (verb == "teacher") p.teacher();
    else if (verb == "pseudo") p.pseudo();
    else if (verb == "student") p.student();
    else if (verb == "eval") {
      p.eval(o.predictions.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.predictions));
    } else if (verb == "report") p.report();
    else if (verb == "all") {
      p.datagen();
      p.split();
      p.baseline();
      p.al();
      p.teacher();
      p.pseudo();
      p.student();
      p.eval();
      p.report();
    }
  } catch (const noisyal::Error& e) {
    std::cerr << "noisyal: " << e.what() << "\n";
    return noisyal::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "noisyal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
