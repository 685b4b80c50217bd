#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgeml {

enum class ErrorKind {
  Domain,
  NotFound,
  Conflict,
  QuotaExceeded,
  Unavailable,
  StaleData,
  Schema,
  UnsupportedFormat,
  Syntax,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::QuotaExceeded: return "quota_exceeded";
    case ErrorKind::Unavailable: return "unavailable";
    case ErrorKind::StaleData: return "stale_data";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::UnsupportedFormat: return "unsupported_format";
    case ErrorKind::Syntax: return "syntax";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so that
/// RPC layers and the CLI can map it to a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace edgeml
