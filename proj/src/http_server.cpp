#include "rjm/http_server.hpp"

#include <httplib.h>

namespace rjm {

struct HttpServer::Impl {
  const PredictionService& service;
  std::string origin;
  httplib::Server server;

  Impl(const PredictionService& s, std::string o) : service(s), origin(std::move(o)) {}

  void cors(httplib::Response& res) const {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Vary", "Origin");
  }

  void dispatch(const std::string& method, const httplib::Request& req, httplib::Response& res) const {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const HttpResponse out = service.handle(method, req.path, req.body, query);
    cors(res);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  }
};

HttpServer::HttpServer(const PredictionService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {
  Impl* impl = impl_.get();
  const std::string any = R"(/.*)";
  impl->server.Get(any, [impl](const httplib::Request& req, httplib::Response& res) { impl->dispatch("GET", req, res); });
  impl->server.Post(any,
                    [impl](const httplib::Request& req, httplib::Response& res) { impl->dispatch("POST", req, res); });
  impl->server.Options(any, [impl](const httplib::Request&, httplib::Response& res) {
    impl->cors(res);
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port, const std::function<void(int)>& on_bound) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) return false;
  } else if (!impl_->server.bind_to_port(host, port)) {
    return false;
  }
  if (on_bound) on_bound(bound);
  return impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace rjm
