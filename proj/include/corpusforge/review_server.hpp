#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

#include "corpusforge/review_service.hpp"

namespace corpusforge::review {

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Routes the JSON API independently of any socket:
//   POST /api/sessions
//   GET  /api/sessions/{id}/next?rater=
//   POST /api/ratings
//   POST /api/sessions/{id}/unblind   (X-Admin-Key header; {"partial"}?)
// Errors come back as {"v", "error"} with 400/403/404/409.
ApiResponse handle_api(ReviewStore& store, const ApiRequest& request);

struct ServerOptions {
  std::optional<std::filesystem::path> static_dir;
  std::optional<nlohmann::json> client_config;  // served at /config.json
};

class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ServerOptions options = {});
  ~ReviewServer();

  // Binds and blocks until stop(). Port 0 picks a free port.
  bool listen(const std::string& host, int port);
  int bind(const std::string& host, int port);
  bool serve();  // after bind()
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace corpusforge::review
