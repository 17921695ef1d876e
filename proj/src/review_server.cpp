#include "corpusforge/review_server.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <httplib.h>

#include "corpusforge/common/log.hpp"

namespace corpusforge::review {

using nlohmann::json;

namespace {

ApiResponse error(int status, const std::string& message) {
  return {status, {{"v", kPayloadVersion}, {"error", message}}};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed JSON body: ") + e.what());
  }
}

void check_version(const json& j) {
  if (j.contains("v") && j.at("v") != kPayloadVersion) {
    throw ValidationError("unsupported payload version " + j.at("v").dump());
  }
}

ApiResponse route(ReviewStore& store, const ApiRequest& req) {
  static const std::regex next_re(R"(^/api/sessions/([^/]+)/next$)");
  static const std::regex unblind_re(R"(^/api/sessions/([^/]+)/unblind$)");
  std::smatch m;
  if (req.path == "/api/sessions") {
    if (req.method != "POST") return error(405, "method not allowed");
    const json body = parse_body(req.body);
    check_version(body);
    return {201, store.create_session(session_request_from_json(body))};
  }
  if (req.path == "/api/ratings") {
    if (req.method != "POST") return error(405, "method not allowed");
    const json body = parse_body(req.body);
    check_version(body);
    const SubmitStatus st = store.submit(rating_from_json(body));
    return {200, {{"v", kPayloadVersion}, {"status", st == SubmitStatus::accepted ? "accepted" : "already"}}};
  }
  if (std::regex_match(req.path, m, next_re)) {
    if (req.method != "GET") return error(405, "method not allowed");
    auto rater = req.query.find("rater");
    if (rater == req.query.end() || rater->second.empty()) throw ValidationError("rater query parameter required");
    return {200, store.next_case(m[1].str(), rater->second)};
  }
  if (std::regex_match(req.path, m, unblind_re)) {
    if (req.method != "POST") return error(405, "method not allowed");
    auto key = req.headers.find("x-admin-key");
    if (key == req.headers.end()) return error(403, "X-Admin-Key header required");
    const json body = parse_body(req.body);
    check_version(body);
    AggregateOptions opts;
    opts.partial = body.value("partial", false);
    return {200, store.unblind(m[1].str(), key->second, opts)};
  }
  return error(404, "no such route");
}

}  // namespace

ApiResponse handle_api(ReviewStore& store, const ApiRequest& request) {
  try {
    return route(store, request);
  } catch (const NotFound& e) {
    return error(404, e.what());
  } catch (const Forbidden& e) {
    return error(403, e.what());
  } catch (const Conflict& e) {
    return error(409, e.what());
  } catch (const ValidationError& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    log::error(std::string("review api: ") + e.what());
    return error(500, "internal error");
  }
}

struct ReviewServer::Impl {
  ReviewStore& store;
  ServerOptions options;
  httplib::Server server;

  Impl(ReviewStore& s, ServerOptions o) : store(s), options(std::move(o)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      ApiRequest api;
      api.method = req.method;
      api.path = req.path;
      api.body = req.body;
      for (const auto& [k, v] : req.params) api.query.emplace(k, v);
      for (const auto& [k, v] : req.headers) api.headers.emplace(lower(k), v);
      const ApiResponse out = handle_api(store, api);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    server.Get(R"(/api/.*)", handler);
    server.Post(R"(/api/.*)", handler);
    if (options.client_config) {
      server.Get("/config.json", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(options.client_config->dump(), "application/json");
      });
    }
    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string())) {
      throw IoError("static directory " + options.static_dir->string() + " does not exist");
    }
  }
};

ReviewServer::ReviewServer(ReviewStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

bool ReviewServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ReviewServer::serve() { return impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
}

bool ReviewServer::running() const { return impl_->server.is_running(); }

}  // namespace corpusforge::review
