#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "edgeml/common/error.hpp"

namespace edgeml::rpc {

/// The remote end could not be reached at all (refused, timed out, bad
/// host). Kind is Unavailable; a 503 answer raises a plain Error instead.
class Unreachable : public Error {
 public:
  explicit Unreachable(const std::string& what) : Error(ErrorKind::Unavailable, what) {}
};

/// 400 for malformed input, 404, 409, 429, 503, 500 for I/O.
int status_for(ErrorKind kind);
/// Inverse of status_for for bodies without an error kind.
ErrorKind kind_for_status(int status);

/// {"error": "<kind>", "message": "..."} as one line.
std::string error_json(ErrorKind kind, std::string_view message);
std::string error_json(const Error& e);

/// Raises the Error described by an error response; falls back to the
/// status when the body is not an error document.
[[noreturn]] void raise_response_error(int status, std::string_view body);

struct Endpoint {
  std::string host;
  int port = 80;
  std::string str() const;
};

/// Parses "http://host:port", "host:port" or "host". Port 0 is accepted
/// (listen on any free port). Error{Domain} otherwise.
Endpoint parse_endpoint(std::string_view url);

}  // namespace edgeml::rpc
