#include "edgeml/rpc/client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "edgeml/rpc/http.hpp"

namespace edgeml::rpc {

using nlohmann::json;

struct JsonClient::Impl {
  std::string url;
  httplib::Client http;

  Impl(const Endpoint& ep, double timeout_s) : url(ep.str()), http(ep.host, ep.port) {
    const auto t = std::chrono::microseconds(static_cast<std::int64_t>(timeout_s * 1e6));
    http.set_connection_timeout(std::min(t, std::chrono::microseconds(5'000'000)));
    http.set_read_timeout(t);
    http.set_write_timeout(t);
  }

  json check(const httplib::Result& r) {
    if (!r) throw Unreachable(url + " unreachable: " + httplib::to_string(r.error()));
    if (r->status < 200 || r->status > 299) raise_response_error(r->status, r->body);
    if (r->body.empty()) return json::object();
    try {
      return json::parse(r->body);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Syntax, std::string("bad response body: ") + e.what());
    }
  }
};

JsonClient::JsonClient(std::string_view url, double timeout_s)
    : impl_(std::make_unique<Impl>(parse_endpoint(url), timeout_s)) {}
JsonClient::~JsonClient() = default;
JsonClient::JsonClient(JsonClient&&) noexcept = default;
JsonClient& JsonClient::operator=(JsonClient&&) noexcept = default;

json JsonClient::get(const std::string& path) { return impl_->check(impl_->http.Get(path)); }

json JsonClient::post(const std::string& path, const std::string& body, const std::string& content_type) {
  return impl_->check(impl_->http.Post(path, body, content_type));
}

json JsonClient::put(const std::string& path, const std::string& body) {
  return impl_->check(impl_->http.Put(path, body, "application/json"));
}

const std::string& JsonClient::url() const { return impl_->url; }

}  // namespace edgeml::rpc
