#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace edgeml::rpc {

/// Blocking JSON-over-HTTP client. Raises Unreachable when no connection can
/// be made and the server's Error for non-2xx answers.
class JsonClient {
 public:
  explicit JsonClient(std::string_view url, double timeout_s = 30.0);
  ~JsonClient();

  JsonClient(JsonClient&&) noexcept;
  JsonClient& operator=(JsonClient&&) noexcept;

  nlohmann::json get(const std::string& path);
  nlohmann::json post(const std::string& path, const std::string& body,
                      const std::string& content_type = "application/json");
  nlohmann::json put(const std::string& path, const std::string& body);

  const std::string& url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgeml::rpc
