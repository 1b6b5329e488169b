#pragma once

#include <functional>
#include <memory>
#include <string>

#include "noisyal/annotation_service.hpp"

namespace noisyal {

/// Serves an AnnotationService over HTTP. The service must outlive the server.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  /// Throws Error(kIo) when binding fails.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Minimal JSON-over-HTTP client used by the scripted annotator.
class HttpClient {
 public:
  HttpClient(const std::string& host, int port);
  ~HttpClient();

  ServiceResponse get(const std::string& path_with_query);
  ServiceResponse post(const std::string& path, const std::string& body);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ScriptedClientOptions {
  std::string annotator_id = "scripted";
  /// Iterations to complete; 0 runs until the session reports finished.
  int iterations = 3;
  /// Submit every annotation twice and check the replay echoes the record.
  bool replay_duplicates = false;
};

struct ScriptedClientResult {
  int iterations_completed = 0;
  std::size_t submitted = 0;
  std::size_t replays_matched = 0;
  bool finished = false;
  /// Body of the final GET /progress.
  std::string final_progress;
};

/// Corrected labels for a leased item, given its id and the suggestion.
using Annotator = std::function<LabelSet(SampleId, const LabelSet& suggested)>;

/// Drives the annotation loop over HTTP: lease, submit, and advance whenever
/// the queue drains. Throws Error(kIo) on unexpected responses.
ScriptedClientResult run_scripted_client(HttpClient& client, const Annotator& annotate,
                                         const ScriptedClientOptions& options);

}  // namespace noisyal
