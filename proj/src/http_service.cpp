#include "noisyal/http_service.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "noisyal/error.hpp"

namespace noisyal {

struct HttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {
    // The default SO_REUSEPORT would let a second server share the port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    const auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      ServiceRequest request{req.method, req.path, {}, req.body};
      for (const auto& [key, value] : req.params) request.query.emplace(key, value);
      const ServiceResponse reply = service.handle(request);
      res.status = reply.status;
      if (!reply.body.empty()) res.set_content(reply.body, "application/json");
    };
    for (const char* path : {"/queue/next", "/annotations", "/iterations/advance", "/progress"}) {
      server.Get(path, forward);
      server.Post(path, forward);
    }
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      res.set_content(R"({"error":{"code":"not_found","message":"no route for )" + req.path + "\"}}",
                      "application/json");
    });
  }
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) fail(ErrorKind::kIo, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    fail(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }
void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

struct HttpClient::Impl {
  httplib::Client client;
  Impl(const std::string& host, int port) : client(host, port) {}
};

HttpClient::HttpClient(const std::string& host, int port)
    : impl_(std::make_unique<Impl>(host, port)) {}
HttpClient::~HttpClient() = default;

namespace {
ServiceResponse convert(const httplib::Result& result, const std::string& what) {
  if (!result) fail(ErrorKind::kIo, what + ": " + httplib::to_string(result.error()));
  return {result->status, result->body};
}
}  // namespace

ServiceResponse HttpClient::get(const std::string& path_with_query) {
  return convert(impl_->client.Get(path_with_query), "GET " + path_with_query);
}

ServiceResponse HttpClient::post(const std::string& path, const std::string& body) {
  return convert(impl_->client.Post(path, body, "application/json"), "POST " + path);
}

}  // namespace noisyal

namespace noisyal {

ScriptedClientResult run_scripted_client(HttpClient& client, const Annotator& annotate,
                                         const ScriptedClientOptions& options) {
  using nlohmann::json;
  ScriptedClientResult result;
  const auto unexpected = [](const std::string& what, const ServiceResponse& r) {
    fail(ErrorKind::kIo, what + " returned " + std::to_string(r.status) + ": " + r.body);
  };
  const std::string next_path = "/queue/next?annotator_id=" + options.annotator_id;
  int idle_retries = 0;
  while (options.iterations == 0 || result.iterations_completed < options.iterations) {
    const ServiceResponse next = client.get(next_path);
    if (next.status == 200) {
      const json j = json::parse(next.body);
      const auto id = j.at("item").at("sample_id").get<SampleId>();
      const LabelSet suggested(j.at("item").at("suggested").get<std::vector<ClassId>>());
      json body;
      body["lease_token"] = j.at("lease_token");
      body["labels"] = annotate(id, suggested).ids();
      const ServiceResponse sub = client.post("/annotations", body.dump());
      if (sub.status != 200) unexpected("POST /annotations", sub);
      ++result.submitted;
      if (options.replay_duplicates) {
        const ServiceResponse again = client.post("/annotations", body.dump());
        if (again.status == 200 && again.body == sub.body) ++result.replays_matched;
      }
      continue;
    }
    if (next.status == 204) {
      const ServiceResponse adv = client.post("/iterations/advance", "{}");
      if (adv.status == 200) {
        ++result.iterations_completed;
        if (json::parse(adv.body).at("finished").get<bool>()) {
          result.finished = true;
          break;
        }
        continue;
      }
      if (adv.status == 409 && json::parse(adv.body).at("error").at("code") == "nothing_to_advance") {
        result.finished = true;
        break;
      }
      unexpected("POST /iterations/advance", adv);
    }
    if (next.status == 409 && ++idle_retries < 600) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      continue;
    }
    unexpected("GET /queue/next", next);
  }
  result.final_progress = client.get("/progress").body;
  return result;
}

}  // namespace noisyal
