#pragma once

#include <memory>
#include <string>

namespace choir {

class Service;

// JSON/HTTP front end for a Service. Routes:
//   POST /v1/events
//   GET  /v1/actions?since=N[&wait=0][&timeout_ms=T]
//   GET  /v1/documents, /v1/documents/{path}[?revision=R], /v1/documents/{path}/history
//   GET  /v1/flows/{id}
//   GET  /healthz
class HttpGateway {
 public:
  explicit HttpGateway(Service& service);
  ~HttpGateway();

  HttpGateway(const HttpGateway&) = delete;
  HttpGateway& operator=(const HttpGateway&) = delete;

  // Blocks until stop(). Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it, or -1. Serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace choir
