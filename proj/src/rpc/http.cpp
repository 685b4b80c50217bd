#include "edgeml/rpc/http.hpp"

#include <charconv>

#include <nlohmann/json.hpp>

namespace edgeml::rpc {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain:
    case ErrorKind::Schema:
    case ErrorKind::UnsupportedFormat:
    case ErrorKind::Syntax: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict:
    case ErrorKind::StaleData: return 409;
    case ErrorKind::QuotaExceeded: return 429;
    case ErrorKind::Unavailable: return 503;
    case ErrorKind::Io: return 500;
  }
  return 500;
}

ErrorKind kind_for_status(int status) {
  switch (status) {
    case 400: return ErrorKind::Domain;
    case 404: return ErrorKind::NotFound;
    case 409: return ErrorKind::Conflict;
    case 429: return ErrorKind::QuotaExceeded;
    case 503: return ErrorKind::Unavailable;
    default: return ErrorKind::Io;
  }
}

std::string error_json(ErrorKind kind, std::string_view message) {
  return nlohmann::json{{"error", to_string(kind)}, {"message", message}}.dump();
}

std::string error_json(const Error& e) { return error_json(e.kind(), e.what()); }

void raise_response_error(int status, std::string_view body) {
  static constexpr ErrorKind kAll[] = {ErrorKind::Domain,      ErrorKind::NotFound,  ErrorKind::Conflict,
                                       ErrorKind::QuotaExceeded, ErrorKind::Unavailable, ErrorKind::StaleData,
                                       ErrorKind::Schema,      ErrorKind::UnsupportedFormat, ErrorKind::Syntax,
                                       ErrorKind::Io};
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("error") && j["error"].is_string()) {
    const std::string kind = j["error"];
    const std::string msg = j.value("message", std::string{});
    for (ErrorKind k : kAll)
      if (to_string(k) == kind) fail(k, msg);
  }
  fail(kind_for_status(status), "HTTP " + std::to_string(status) + ": " + std::string(body.substr(0, 200)));
}

std::string Endpoint::str() const { return "http://" + host + ":" + std::to_string(port); }

Endpoint parse_endpoint(std::string_view url) {
  std::string_view rest = url;
  if (rest.starts_with("http://")) rest.remove_prefix(7);
  else if (rest.find("://") != std::string_view::npos)
    fail(ErrorKind::Domain, "only http:// URLs are supported: " + std::string(url));
  while (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
  if (rest.find('/') != std::string_view::npos) fail(ErrorKind::Domain, "URL must not carry a path: " + std::string(url));
  Endpoint ep;
  const std::size_t colon = rest.rfind(':');
  ep.host = std::string(rest.substr(0, colon));
  if (colon != std::string_view::npos) {
    const std::string_view p = rest.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), ep.port);
    if (ec != std::errc{} || ptr != p.data() + p.size() || ep.port < 0 || ep.port > 65535)
      fail(ErrorKind::Domain, "bad port in URL: " + std::string(url));
  }
  if (ep.host.empty()) fail(ErrorKind::Domain, "URL has no host: " + std::string(url));
  return ep;
}

}  // namespace edgeml::rpc
