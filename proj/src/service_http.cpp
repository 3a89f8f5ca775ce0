#include "clickseg/service.hpp"

#include <spdlog/spdlog.h>

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

namespace clickseg {

struct HttpFrontend::Impl {
  AnnotatorService& service;
  httplib::Server server;

  explicit Impl(AnnotatorService& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.payload(), r.content_type.c_str());
}

/// Parses a JSON body; an empty body is an empty object.
bool parse_body(const httplib::Request& req, httplib::Response& res, nlohmann::json& out) {
  if (req.body.empty()) {
    out = nlohmann::json::object();
    return true;
  }
  out = nlohmann::json::parse(req.body, nullptr, false);
  if (out.is_discarded()) {
    res.status = 400;
    res.set_content(nlohmann::json{{"error", "request body is not valid JSON"}}.dump(), "application/json");
    return false;
  }
  return true;
}

}  // namespace

HttpFrontend::HttpFrontend(AnnotatorService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  AnnotatorService& svc = impl_->service;
  using Req = const httplib::Request&;
  using Res = httplib::Response&;

  srv.Get("/healthz", [&svc](Req, Res res) { send(res, svc.health()); });
  srv.Post("/shapes", [&svc](Req req, Res res) { send(res, svc.upload_shape(req.body)); });
  srv.Get(R"(/shapes/([^/]+))", [&svc](Req req, Res res) { send(res, svc.get_shape(req.matches[1])); });
  srv.Get(R"(/shapes/([^/]+)/meta)", [&svc](Req req, Res res) { send(res, svc.get_shape_meta(req.matches[1])); });
  srv.Get(R"(/shapes/([^/]+)/annotations)",
          [&svc](Req req, Res res) { send(res, svc.list_annotations(req.matches[1])); });
  srv.Get(R"(/shapes/([^/]+)/labels)", [&svc](Req req, Res res) { send(res, svc.export_labels(req.matches[1])); });
  srv.Post("/sessions", [&svc](Req req, Res res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) send(res, svc.create_session(body));
  });
  srv.Post(R"(/sessions/([^/]+)/ops)", [&svc](Req req, Res res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) send(res, svc.session_op(req.matches[1], body));
  });
  srv.Get(R"(/sessions/([^/]+)/mask)", [&svc](Req req, Res res) { send(res, svc.get_mask(req.matches[1])); });
  srv.Post(R"(/sessions/([^/]+)/finetune)", [&svc](Req req, Res res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) send(res, svc.finetune_session(req.matches[1], body));
  });
  srv.Post(R"(/sessions/([^/]+)/commit)", [&svc](Req req, Res res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) send(res, svc.commit(req.matches[1], body));
  });
  srv.set_exception_handler([](Req, Res res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    res.status = 500;
    res.set_content(nlohmann::json{{"error", what}}.dump(), "application/json");
  });
  srv.set_logger([](Req req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

HttpFrontend::~HttpFrontend() = default;

int HttpFrontend::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() { impl_->server.stop(); }

void serve_http(AnnotatorService& service, const std::string& host, int port) {
  HttpFrontend frontend(service);
  const int bound = frontend.bind(host, port);
  spdlog::info("serving on http://{}:{} (data dir {})", host, bound, service.config().data_dir.string());
  frontend.run();
}

}  // namespace clickseg
