#include "pact/transport.hpp"

#include <httplib.h>

#include <algorithm>
#include <nlohmann/json.hpp>

namespace pact::net {

std::string query_string(const std::map<std::string, std::string>& query) {
  httplib::Params params(query.begin(), query.end());
  return httplib::detail::params_to_query_str(params);
}

std::size_t wire_size(const Request& r) {
  std::size_t n = r.method.size() + r.path.size() + r.body.size();
  if (!r.query.empty()) n += 1 + query_string(r.query).size();
  return n;
}

void LocalTransport::mount(std::string prefix, Handler handler) {
  routes_.emplace_back(std::move(prefix), std::move(handler));
  std::stable_sort(routes_.begin(), routes_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
}

Response LocalTransport::send(const Request& request) {
  for (const auto& [prefix, handler] : routes_) {
    if (request.path.compare(0, prefix.size(), prefix) == 0) {
      Request r = request;
      r.source = source_;
      return handler(r);
    }
  }
  throw TransportError("no route for " + request.path);
}

Response SpyTransport::send(const Request& request) {
  log_.push_back(request);
  if (!inner_) return error_response(503, "spy has no upstream");
  auto resp = inner_->send(request);
  received_ += resp.body.size();
  return resp;
}

std::size_t SpyTransport::bytes_sent() const {
  std::size_t n = 0;
  for (const auto& r : log_) n += wire_size(r);
  return n;
}

struct HttpTransport::Impl {
  explicit Impl(const std::string& url) : client(url) {}
  httplib::Client client;
};

HttpTransport::HttpTransport(std::string base_url, int timeout_seconds)
    : impl_(std::make_unique<Impl>(base_url)) {
  if (!impl_->client.is_valid()) throw TransportError("invalid endpoint url: " + base_url);
  impl_->client.set_connection_timeout(timeout_seconds, 0);
  impl_->client.set_read_timeout(timeout_seconds, 0);
  impl_->client.set_write_timeout(timeout_seconds, 0);
}

HttpTransport::~HttpTransport() = default;

Response HttpTransport::send(const Request& request) {
  httplib::Result res;
  const httplib::Params params(request.query.begin(), request.query.end());
  if (request.method == "GET") {
    res = impl_->client.Get(request.path, params, httplib::Headers{});
  } else if (request.method == "POST") {
    std::string path = request.path;
    if (!request.query.empty()) path += "?" + query_string(request.query);
    res = impl_->client.Post(path, request.body, "application/json");
  } else {
    throw TransportError("unsupported method " + request.method);
  }
  if (!res) throw TransportError("request to " + request.path + " failed: " + httplib::to_string(res.error()));
  Response out;
  out.status = res->status;
  out.body = res->body;
  out.content_type = res->get_header_value("Content-Type");
  return out;
}

struct HttpServer::Impl {
  httplib::Server server;
  Handler handler;
};

HttpServer::HttpServer(Handler handler) : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  auto route = [this](const httplib::Request& in, httplib::Response& out) {
    Request r;
    r.method = in.method;
    r.path = in.path;
    for (const auto& [k, v] : in.params) r.query[k] = v;
    r.body = in.body;
    r.source = in.remote_addr;
    Response resp;
    try {
      resp = impl_->handler(r);
    } catch (const std::exception& e) {
      resp = error_response(500, e.what());
    }
    out.status = resp.status;
    out.set_content(resp.body, resp.content_type);
  };
  impl_->server.Get(".*", route);
  impl_->server.Post(".*", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw TransportError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

Response json_response(int status, const std::string& body) { return Response{status, body, "application/json"}; }

Response error_response(int status, const std::string& reason) {
  return json_response(status, nlohmann::json{{"error", reason}}.dump());
}

}  // namespace pact::net
