#include "edgeml/cloud/server.hpp"

#include "../rpc/http_server.hpp"

namespace edgeml::cloud {

using nlohmann::json;
using rpc::guarded;
using rpc::send_json;

namespace {

constexpr const char* kName = R"(([A-Za-z0-9_][A-Za-z0-9_.\-]*))";

void send_document(httplib::Response& res, const RegistryEntry& e) {
  res.set_header("X-Model-Name", e.name);
  res.set_header("X-Model-Version", std::to_string(e.version));
  res.set_content(e.document, "application/json");
}

}  // namespace

struct CloudServer::Impl {
  Impl(ModelRegistry& r, DatasetStore& d) : registry(r), datasets(d) {}
  ModelRegistry& registry;
  DatasetStore& datasets;
  rpc::ServerThread http;
};

CloudServer::CloudServer(ModelRegistry& registry, DatasetStore& datasets)
    : impl_(std::make_unique<Impl>(registry, datasets)) {
  auto& svr = impl_->http.server();
  Impl* s = impl_.get();
  const std::string name = kName;

  svr.Put("/models/" + name + "/versions", guarded([s](const httplib::Request& req, httplib::Response& res) {
            const std::int64_t v = s->registry.put(req.matches[1].str(), req.body);
            send_json(res, {{"name", req.matches[1].str()}, {"version", v}}, 201);
          }));
  svr.Get("/models/" + name + "/versions/latest", guarded([s](const httplib::Request& req, httplib::Response& res) {
            send_document(res, s->registry.get(req.matches[1].str()));
          }));
  svr.Get("/models/" + name + R"(/versions/(\d+))", guarded([s](const httplib::Request& req, httplib::Response& res) {
            send_document(res, s->registry.get(req.matches[1].str(), std::stoll(req.matches[2].str())));
          }));
  svr.Get("/models/" + name + "/versions", guarded([s](const httplib::Request& req, httplib::Response& res) {
            json versions = json::array();
            for (const auto& e : s->registry.list(req.matches[1].str())) versions.push_back(summary_json(e));
            send_json(res, {{"name", req.matches[1].str()}, {"versions", versions}});
          }));
  svr.Get("/models", guarded([s](const httplib::Request&, httplib::Response& res) {
            send_json(res, {{"names", s->registry.names()}});
          }));
  svr.Post("/data/" + name, guarded([s](const httplib::Request& req, httplib::Response& res) {
             send_json(res, s->datasets.upload(req.matches[1].str(), req.body));
           }));
  svr.Get("/data/" + name, guarded([s](const httplib::Request& req, httplib::Response& res) {
            CycleRange range{rpc::int_param(req, "from_cycle"), rpc::int_param(req, "to_cycle")};
            res.set_content(s->datasets.fetch_ndjson(req.matches[1].str(), range), "application/x-ndjson");
          }));
}

CloudServer::~CloudServer() { stop(); }

int CloudServer::start(const std::string& host, int port) { return impl_->http.start(host, port); }
void CloudServer::run(const std::string& host, int port) { impl_->http.run(host, port); }
void CloudServer::stop() { impl_->http.stop(); }
int CloudServer::port() const { return impl_->http.port(); }

}  // namespace edgeml::cloud
