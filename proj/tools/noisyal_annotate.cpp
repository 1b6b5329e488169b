// Scripted annotator: drives a running annotation service over HTTP, answering
// each leased item from a manifest's true labels or by accepting the suggestion.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "noisyal/error.hpp"
#include "noisyal/http_service.hpp"
#include "noisyal/manifest.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Scripted HTTP client for the annotation service"};
  std::string host = "127.0.0.1";
  int port = 8765;
  std::string manifest;
  noisyal::ScriptedClientOptions options;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  app.add_option("--manifest", manifest, "answer with this manifest's true labels")->check(CLI::ExistingFile);
  app.add_option("--annotator", options.annotator_id)->capture_default_str();
  app.add_option("--iterations", options.iterations, "0 runs until the session finishes")->capture_default_str();
  app.add_flag("--replay", options.replay_duplicates, "submit every annotation twice");
  CLI11_PARSE(app, argc, argv);

  try {
    noisyal::Dataset truth;
    if (!manifest.empty()) truth = noisyal::load_manifest(manifest);
    const noisyal::Annotator answer = [&](noisyal::SampleId id, const noisyal::LabelSet& suggested) {
      return manifest.empty() ? suggested : truth.by_id(id).true_labels;
    };
    noisyal::HttpClient client(host, port);
    const auto result = noisyal::run_scripted_client(client, answer, options);
    std::cout << "iterations " << result.iterations_completed << ", submitted " << result.submitted;
    if (options.replay_duplicates) std::cout << ", replays matched " << result.replays_matched;
    std::cout << (result.finished ? ", session finished" : "") << "\n" << result.final_progress << "\n";
  } catch (const noisyal::Error& e) {
    std::cerr << "noisyal-annotate: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
