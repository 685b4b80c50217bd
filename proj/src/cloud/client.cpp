#include "edgeml/cloud/client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "edgeml/boost/portable.hpp"
#include "edgeml/common/error.hpp"
#include "edgeml/rpc/http.hpp"

namespace edgeml::cloud {

using nlohmann::json;

namespace {

Lineage lineage_from(const json& j) {
  Lineage l;
  l.dataset_id = j.value("dataset_id", std::string{});
  l.run_id = j.value("run_id", std::string{});
  if (auto it = j.find("parent_version"); it != j.end() && !it->is_null()) l.parent_version = it->get<std::int64_t>();
  l.trained_at = j.value("trained_at", std::string{});
  return l;
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Syntax, std::string("bad response body: ") + e.what());
  }
}

}  // namespace

struct CloudClient::Impl {
  std::string url;
  httplib::Client http;

  Impl(std::string u, const rpc::Endpoint& ep, const ClientOptions& o) : url(std::move(u)), http(ep.host, ep.port) {
    auto to_duration = [](double s) { return std::chrono::microseconds(static_cast<std::int64_t>(s * 1e6)); };
    http.set_connection_timeout(to_duration(o.connect_timeout_s));
    http.set_read_timeout(to_duration(o.read_timeout_s));
    http.set_write_timeout(to_duration(o.read_timeout_s));
  }

  const httplib::Response& check(const httplib::Result& r, int ok_lo = 200, int ok_hi = 299) {
    if (!r) throw rpc::Unreachable("cloud at " + url + " unreachable: " + httplib::to_string(r.error()));
    if (r->status < ok_lo || r->status > ok_hi) rpc::raise_response_error(r->status, r->body);
    return *r;
  }
};

CloudClient::CloudClient(std::string_view url, ClientOptions options) {
  const rpc::Endpoint ep = rpc::parse_endpoint(url);
  impl_ = std::make_unique<Impl>(ep.str(), ep, options);
}

CloudClient::~CloudClient() = default;
CloudClient::CloudClient(CloudClient&&) noexcept = default;
CloudClient& CloudClient::operator=(CloudClient&&) noexcept = default;

const std::string& CloudClient::url() const { return impl_->url; }

std::int64_t CloudClient::put_model(std::string_view name, std::string_view document) {
  auto r = impl_->http.Put("/models/" + std::string(name) + "/versions", std::string(document), "application/json");
  return parse_body(impl_->check(r).body).at("version").get<std::int64_t>();
}

RegistryEntry CloudClient::get_model(std::string_view name, std::optional<std::int64_t> version) {
  const std::string path =
      "/models/" + std::string(name) + "/versions/" + (version ? std::to_string(*version) : std::string("latest"));
  auto r = impl_->http.Get(path);
  const auto& res = impl_->check(r);
  RegistryEntry e;
  e.name = std::string(name);
  e.document = res.body;
  const boost::PortableModel pm = boost::parse(e.document);
  e.version = pm.metadata.version;
  if (res.has_header("X-Model-Version")) e.version = std::stoll(res.get_header_value("X-Model-Version"));
  e.lineage = {pm.metadata.dataset_id, pm.metadata.run_id, pm.metadata.parent_version, pm.metadata.trained_at};
  return e;
}

std::vector<RegistryEntry> CloudClient::list_versions(std::string_view name) {
  auto r = impl_->http.Get("/models/" + std::string(name) + "/versions");
  const json j = parse_body(impl_->check(r).body);
  std::vector<RegistryEntry> out;
  for (const auto& v : j.at("versions"))
    out.push_back({j.at("name").get<std::string>(), v.at("version").get<std::int64_t>(), {}, lineage_from(v.at("lineage"))});
  return out;
}

std::vector<std::string> CloudClient::list_models() {
  auto r = impl_->http.Get("/models");
  return parse_body(impl_->check(r).body).at("names").get<std::vector<std::string>>();
}

UploadResult CloudClient::upload(std::string_view dataset_id, std::string_view ndjson) {
  auto r = impl_->http.Post("/data/" + std::string(dataset_id), std::string(ndjson), "application/x-ndjson");
  const json j = parse_body(impl_->check(r).body);
  UploadResult u;
  u.accepted = j.at("accepted").get<std::size_t>();
  u.duplicates = j.value("duplicates", std::size_t{0});
  u.rejected = j.at("rejected").get<std::size_t>();
  u.errors = j.value("errors", std::vector<std::string>{});
  return u;
}

std::string CloudClient::fetch(std::string_view dataset_id, const CycleRange& range) {
  httplib::Params params;
  if (range.from_cycle) params.emplace("from_cycle", std::to_string(*range.from_cycle));
  if (range.to_cycle) params.emplace("to_cycle", std::to_string(*range.to_cycle));
  auto r = impl_->http.Get("/data/" + std::string(dataset_id), params, httplib::Headers{});
  return impl_->check(r).body;
}

}  // namespace edgeml::cloud
