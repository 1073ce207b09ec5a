#include "choir/http_server.hpp"

#include "choir/error.hpp"
#include "choir/gateway.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>

namespace choir {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDocumentNotFound:
    case ErrorCode::kRevisionNotFound:
    case ErrorCode::kUnknownFlow:
      return 404;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformedEvent:
      return 400;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", std::string(error_code_name(code))}, {"message", message}}}});
}

std::uint64_t query_u64(const httplib::Request& req, const char* name, std::uint64_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const auto value = std::stoull(text, &used);
    if (used == text.size()) return value;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kInvalidArgument, std::string("query parameter ") + name + " must be a non-negative integer");
}

std::string actions_ndjson(const std::vector<ChatAction>& actions) {
  std::string out;
  for (const auto& a : actions) out += to_json(a).dump() + "\n";
  return out;
}

}  // namespace

struct HttpGateway::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
};

HttpGateway::HttpGateway(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& server = impl_->server;
  Service& svc = service;

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.code(), e.detail());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", {{"code", "Internal"}, {"message", e.what()}}}});
    }
  });

  server.Post("/v1/events", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      send_error(res, 400, ErrorCode::kMalformedEvent, std::string("body is not JSON: ") + e.what());
      return;
    }
    const auto result = svc.ingest(body);
    send_json(res, result.status, result.body);
  });

  server.Get("/v1/actions", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto since = query_u64(req, "since", 0);
    const bool follow = !req.has_param("wait") || req.get_param_value("wait") != "0";
    if (!follow) {
      json list = json::array();
      for (const auto& a : svc.actions_since(since)) list.push_back(to_json(a));
      send_json(res, 200, {{"actions", list}, {"last_seq", svc.last_seq()}});
      return;
    }
    // Long-lived NDJSON stream; ends on shutdown or after `timeout_ms` idle.
    const auto idle = std::chrono::milliseconds(query_u64(req, "timeout_ms", 0));
    auto cursor = std::make_shared<std::uint64_t>(since);
    res.set_chunked_content_provider("application/x-ndjson", [&svc, cursor, idle](std::size_t, httplib::DataSink& sink) {
      const auto slice = idle.count() > 0 ? idle : std::chrono::milliseconds(1000);
      while (true) {
        auto batch = svc.actions_since(*cursor);
        if (!batch.empty()) {
          *cursor = batch.back().seq;
          const auto text = actions_ndjson(batch);
          return sink.write(text.data(), text.size());
        }
        if (svc.is_shut_down() || !sink.is_writable()) {
          sink.done();
          return true;
        }
        if (!svc.wait_for_actions(*cursor, slice) && idle.count() > 0) {
          sink.done();
          return true;
        }
      }
    });
  });

  server.Get("/v1/documents", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, svc.documents_view());
  });

  server.Get(R"(/v1/documents/(.+)/history)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, svc.history_view(req.matches[1].str()));
  });

  server.Get(R"(/v1/documents/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> revision;
    if (req.has_param("revision")) revision = req.get_param_value("revision");
    send_json(res, 200, svc.document_view(req.matches[1].str(), revision));
  });

  server.Get(R"(/v1/flows/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto view = svc.flow_view(req.matches[1].str());
    if (!view) {
      send_error(res, 404, ErrorCode::kUnknownFlow, "no flow " + req.matches[1].str());
      return;
    }
    send_json(res, 200, *view);
  });

  server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, svc.health_view());
  });
}

HttpGateway::~HttpGateway() { stop(); }

bool HttpGateway::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpGateway::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpGateway::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpGateway::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpGateway::stop() {
  impl_->service.shutdown();
  impl_->server.stop();
}

}  // namespace choir
