#pragma once

#include <functional>
#include <memory>
#include <string>

#include "rjm/service.hpp"

namespace rjm {

// HTTP front end for PredictionService with CORS headers for `cors_origin`.
class HttpServer {
 public:
  HttpServer(const PredictionService& service, std::string cors_origin);
  ~HttpServer();

  // Binds and serves until stop(); port 0 picks a free port. Returns false
  // when binding fails.
  bool listen(const std::string& host, int port, const std::function<void(int)>& on_bound = {});
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rjm
