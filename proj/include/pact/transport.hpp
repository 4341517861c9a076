#pragma once

// Request/response plumbing shared by the services and their clients. The
// same handler runs behind the HTTP server and behind the in-process
// transport used by tests and the simulator.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pact/bytes.hpp"

namespace pact::net {

struct Request {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string source;  // peer address; set by the server side
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  bool ok() const { return status >= 200 && status < 300; }
};

using Handler = std::function<Response(const Request&)>;

/// The endpoint could not be reached or the exchange broke off.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Bytes a request puts on the wire, ignoring framing: method, path, query
/// and body.
std::size_t wire_size(const Request& r);
std::string query_string(const std::map<std::string, std::string>& query);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response send(const Request& request) = 0;
};

/// Routes by longest matching path prefix to in-process handlers.
class LocalTransport final : public Transport {
 public:
  explicit LocalTransport(std::string source = "local") : source_(std::move(source)) {}
  void mount(std::string prefix, Handler handler);
  Response send(const Request& request) override;

 private:
  std::string source_;
  std::vector<std::pair<std::string, Handler>> routes_;
};

/// Records every request before forwarding it (or dropping it when there is
/// no inner transport).
class SpyTransport final : public Transport {
 public:
  explicit SpyTransport(Transport* inner = nullptr) : inner_(inner) {}
  Response send(const Request& request) override;

  const std::vector<Request>& requests() const { return log_; }
  std::size_t bytes_sent() const;
  std::size_t bytes_received() const { return received_; }
  void clear() {
    log_.clear();
    received_ = 0;
  }

 private:
  Transport* inner_;
  std::vector<Request> log_;
  std::size_t received_ = 0;
};

/// Fails every request, for exercising retry paths.
class DownTransport final : public Transport {
 public:
  Response send(const Request&) override { throw TransportError("endpoint unreachable"); }
};

/// HTTP client over cpp-httplib. base_url like "http://127.0.0.1:8080".
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url, int timeout_seconds = 5);
  ~HttpTransport() override;
  Response send(const Request& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking HTTP server dispatching every request to handler. stop() may be
/// called from another thread.
class HttpServer {
 public:
  explicit HttpServer(Handler handler);
  ~HttpServer();
  /// Binds host:port (port 0 picks a free one); returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Response json_response(int status, const std::string& body);
Response error_response(int status, const std::string& reason);

}  // namespace pact::net
