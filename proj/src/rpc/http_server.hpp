#pragma once

// Private helpers shared by the HTTP servers. Includes cpp-httplib.

#include <atomic>
#include <charconv>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/rpc/http.hpp"

namespace edgeml::rpc {

inline void send_error(httplib::Response& res, ErrorKind kind, std::string_view message) {
  res.status = status_for(kind);
  res.set_content(error_json(kind, message), "application/json");
}

inline void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

/// Wraps a handler so library errors become JSON error responses.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorKind::Syntax, e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorKind::Io, e.what());
    }
  };
}

inline std::optional<std::int64_t> int_param(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string v = req.get_param_value(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail(ErrorKind::Domain, "query parameter " + key + " must be an integer");
  return out;
}

/// An httplib server with a background serving thread.
class ServerThread {
 public:
  httplib::Server& server() { return svr_; }

  int start(const std::string& host, int port) {
    bind(host, port);
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
    return port_;
  }

  void run(const std::string& host, int port) {
    bind(host, port);
    svr_.listen_after_bind();
  }

  void stop() {
    svr_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  ~ServerThread() { stop(); }

 private:
  void bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = svr_.bind_to_any_port(host);
      if (port_ <= 0) fail(ErrorKind::Unavailable, "cannot bind " + host);
    } else {
      if (!svr_.bind_to_port(host, port)) fail(ErrorKind::Unavailable, "cannot bind " + host + ":" + std::to_string(port));
      port_ = port;
    }
  }

  httplib::Server svr_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace edgeml::rpc
