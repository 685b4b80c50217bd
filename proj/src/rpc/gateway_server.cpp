#include "edgeml/rpc/gateway_server.hpp"

#include <chrono>
#include <limits>
#include <sstream>

#include "http_server.hpp"

namespace edgeml::rpc {

using nlohmann::json;

namespace {

json entry_json(const gateway::ContextEntry& e) {
  return {{"value", e.value}, {"timestamp_ns", e.timestamp_ns}, {"source", e.source_device}};
}

json device_json(const gateway::DeviceInfo& d) {
  json props = json::object();
  for (const auto& [name, r] : d.properties) props[name] = {{"value", r.value}, {"timestamp_ns", r.timestamp_ns}};
  return {{"id", d.descriptor.id},
          {"protocol", d.descriptor.protocol},
          {"properties", props},
          {"command_count", d.command_count}};
}

json model_json(const mlrt::ModelRecord& m) {
  json j = {{"name", m.name},
            {"version", m.version},
            {"status", mlrt::to_string(m.status)},
            {"required_features", m.required_features}};
  if (m.portable) {
    j["model_type"] = m.portable->model_type();
    j["dataset_id"] = m.portable->metadata.dataset_id;
    j["run_id"] = m.portable->metadata.run_id;
    j["parent_version"] =
        m.portable->metadata.parent_version ? json(*m.portable->metadata.parent_version) : json(nullptr);
    j["trained_at"] = m.portable->metadata.trained_at;
  }
  return j;
}

json prediction_json(const mlrt::Prediction& p) {
  return {{"value", p.value}, {"model", p.model_name}, {"version", p.version}};
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Syntax, std::string("request body: ") + e.what());
  }
}

template <class T>
T& need(T* p, const char* what) {
  if (!p) fail(ErrorKind::Unavailable, std::string(what) + " is not enabled on this gateway");
  return *p;
}

}  // namespace

struct GatewayServer::Impl {
  explicit Impl(GatewayServices s) : services(s) {}
  GatewayServices services;
  ServerThread http;
  std::atomic<bool> stopping{false};
};

GatewayServer::GatewayServer(GatewayServices services) : impl_(std::make_unique<Impl>(services)) {
  auto& svr = impl_->http.server();
  Impl* s = impl_.get();
  auto& sv = impl_->services;

  // Context and devices.
  svr.Get("/context", guarded([&sv](const httplib::Request&, httplib::Response& res) {
            json j = json::object();
            for (const auto& [k, e] : need(sv.devices, "device manager").snapshot_context()) j[k] = entry_json(e);
            send_json(res, j);
          }));
  svr.Get(R"(/context/(.+))", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            const std::string key = req.matches[1].str();
            auto e = need(sv.devices, "device manager").get(key);
            if (!e) fail(ErrorKind::NotFound, "no context entry '" + key + "'");
            json j = entry_json(*e);
            j["key"] = key;
            send_json(res, j);
          }));
  svr.Get("/devices", guarded([&sv](const httplib::Request&, httplib::Response& res) {
            json j = json::array();
            for (const auto& d : need(sv.devices, "device manager").devices()) j.push_back(device_json(d));
            send_json(res, j);
          }));
  svr.Put(R"(/devices/([^/]+)/([^/]+))", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            const json b = body_json(req);
            if (!b.contains("value") || !b["value"].is_number()) fail(ErrorKind::Schema, "body needs a numeric 'value'");
            const double v = b["value"].get<double>();
            need(sv.devices, "device manager").write_property(req.matches[1].str(), req.matches[2].str(), v);
            send_json(res, {{"device", req.matches[1].str()}, {"property", req.matches[2].str()}, {"value", v}});
          }));
  svr.Get("/events", guarded([s, &sv](const httplib::Request& req, httplib::Response& res) {
            const std::string pattern = req.has_param("pattern") ? req.get_param_value("pattern") : "*";
            auto stream = need(sv.devices, "device manager").subscribe_events(pattern);
            const auto max_events = int_param(req, "max_events");
            const auto timeout_s = int_param(req, "timeout_s");
            const auto deadline = timeout_s ? std::chrono::steady_clock::now() + std::chrono::seconds(*timeout_s)
                                            : std::chrono::steady_clock::time_point::max();
            auto sent = std::make_shared<std::int64_t>(0);
            res.set_chunked_content_provider(
                "application/x-ndjson",
                [s, stream, max_events, deadline, sent](std::size_t, httplib::DataSink& sink) {
                  if (s->stopping || (max_events && *sent >= *max_events) ||
                      std::chrono::steady_clock::now() >= deadline) {
                    sink.done();
                    return true;
                  }
                  std::optional<gateway::ContextEntry> e;
                  try {
                    e = stream->pop(std::chrono::milliseconds(100));
                  } catch (const Error& err) {
                    const std::string line = error_json(err) + "\n";
                    sink.write(line.data(), line.size());
                    sink.done();
                    return true;
                  }
                  if (e) {
                    json j = entry_json(*e);
                    j["key"] = e->key;
                    const std::string line = j.dump() + "\n";
                    if (!sink.write(line.data(), line.size())) return false;
                    ++*sent;
                  }
                  return sink.is_writable();
                },
                [stream](bool) { stream->cancel(); });
          }));

  // Time-series store.
  svr.Post("/write", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             auto& store = need(sv.store, "store");
             std::vector<TimePoint> points;
             std::size_t line_no = 0;
             std::istringstream in(req.body);
             for (std::string line; std::getline(in, line);) {
               ++line_no;
               if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
               try {
                 const json p = json::parse(line);
                 points.push_back({p.at("series").get<std::string>(), p.at("timestamp_ns").get<TimestampNs>(),
                                   p.at("value").get<double>()});
               } catch (const json::exception& e) {
                 fail(ErrorKind::Schema, "line " + std::to_string(line_no) + ": " + e.what());
               }
             }
             const std::size_t n = store.append_batch(points);
             if (sv.devices) sv.devices->ingest(points);
             send_json(res, {{"accepted", n}});
           }));
  svr.Get("/query", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("series")) fail(ErrorKind::Domain, "query needs a series parameter");
            const std::string series = req.get_param_value("series");
            const TimestampNs from = int_param(req, "from").value_or(std::numeric_limits<TimestampNs>::min());
            const TimestampNs to = int_param(req, "to").value_or(std::numeric_limits<TimestampNs>::max());
            json pts = json::array();
            for (const auto& p : need(sv.store, "store").query_range(series, from, to))
              pts.push_back({{"timestamp_ns", p.timestamp_ns}, {"value", p.value}});
            send_json(res, {{"series", series}, {"points", pts}});
          }));

  // Models.
  svr.Post("/models", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             send_json(res, model_json(need(sv.ml, "ml runtime").deploy_document(req.body)), 201);
           }));
  svr.Get("/models", guarded([&sv](const httplib::Request&, httplib::Response& res) {
            json j = json::array();
            for (const auto& m : need(sv.ml, "ml runtime").models()) j.push_back(model_json(m));
            send_json(res, j);
          }));
  svr.Post(R"(/models/([^/]+)/(\d+)/activate)", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             const std::string name = req.matches[1].str();
             const auto prev = need(sv.ml, "ml runtime").activate(name, std::stoll(req.matches[2].str()));
             send_json(res, {{"name", name},
                             {"active_version", *sv.ml->active_version(name)},
                             {"previous_version", prev ? json(*prev) : json(nullptr)}});
           }));
  svr.Post(R"(/models/([^/]+)/rollback)", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             const std::string name = req.matches[1].str();
             const std::int64_t v = need(sv.ml, "ml runtime").rollback(name);
             send_json(res, {{"name", name}, {"active_version", v}});
           }));
  svr.Post(R"(/models/([^/]+)/retrain)", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             const json b = body_json(req);
             std::optional<int> rounds;
             if (b.contains("rounds")) rounds = b["rounds"].get<int>();
             const auto rec = need(sv.ml, "ml runtime").retrain_local(req.matches[1].str(), rounds);
             send_json(res, model_json(rec), 201);
           }));
  svr.Get(R"(/models/([^/]+)/drift)", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            const auto d = need(sv.ml, "ml runtime").drift_status(req.matches[1].str());
            send_json(res, {{"name", req.matches[1].str()},
                            {"window", d.window.size()},
                            {"capacity", d.capacity},
                            {"mean_relative_error", d.mean},
                            {"threshold", d.threshold},
                            {"alarm", d.alarm}});
          }));
  svr.Post("/predict", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             auto& ml = need(sv.ml, "ml runtime");
             const json b = body_json(req);
             mlrt::FeatureMap features;
             if (b.contains("features"))
               for (const auto& [k, v] : b["features"].items()) features[k] = v.get<double>();
             if (b.contains("models")) {
               const auto e = ml.predict_ensemble(b["models"].get<std::vector<std::string>>(), features);
               json members = json::array();
               for (const auto& m : e.members) members.push_back(prediction_json(m));
               send_json(res, {{"value", e.value}, {"members", members}});
             } else if (b.contains("model")) {
               send_json(res, prediction_json(ml.predict(b["model"].get<std::string>(), features)));
             } else {
               fail(ErrorKind::Schema, "body needs 'model' or 'models'");
             }
           }));

  // Sequencing.
  svr.Post("/demand", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
             auto& ctl = need(sv.controller, "sequencing controller");
             const json b = body_json(req);
             if (!b.contains("demand_kw") || !b["demand_kw"].is_number())
               fail(ErrorKind::Schema, "body needs a numeric 'demand_kw'");
             const TimestampNs now = sv.devices ? sv.devices->clock().now_ns() : 0;
             const chillseq::CoolingDemand d{b["demand_kw"].get<double>(), now,
                                             b.value("period_s", ctl.options().period_s)};
             send_json(res, ctl.run_cycle(d));
           }));
  svr.Get(R"(/cycles/(\d+))", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            const std::int64_t id = std::stoll(req.matches[1].str());
            auto rec = need(sv.controller, "sequencing controller").cycle(id);
            if (!rec) fail(ErrorKind::NotFound, "no cycle " + std::to_string(id));
            send_json(res, *rec);
          }));
  svr.Get("/cycles", guarded([&sv](const httplib::Request& req, httplib::Response& res) {
            const auto last = int_param(req, "last").value_or(10);
            if (last < 0) fail(ErrorKind::Domain, "last must be >= 0");
            send_json(res, need(sv.controller, "sequencing controller").last_cycles(static_cast<std::size_t>(last)));
          }));

  svr.Get("/stats", guarded([&sv](const httplib::Request&, httplib::Response& res) {
            json j = json::object();
            if (sv.store) j["store"] = {{"series", sv.store->series_names().size()}, {"points", sv.store->point_count()}};
            if (sv.devices)
              j["devices"] = {{"count", sv.devices->devices().size()}, {"context_keys", sv.devices->snapshot_context().size()}};
            if (sv.ml) {
              json models = json::object();
              for (const auto& m : sv.ml->models()) {
                if (m.status != mlrt::ModelStatus::Active) continue;
                const auto d = sv.ml->drift_status(m.name);
                models[m.name] = {{"active_version", m.version}, {"drift", d.mean}, {"alarm", d.alarm}};
              }
              j["ml"] = {{"models", models}, {"pending_export", sv.ml->pending_export()}};
            }
            if (sv.controller) {
              std::int64_t fallback = 0, missed = 0;
              double max_wall = 0.0;
              const auto recs = sv.controller->last_cycles(sv.controller->cycle_count());
              for (const auto& r : recs) {
                fallback += r.plan_source != "ml" && r.plan_source != "manual";
                missed += r.has_flag("deadline_missed");
                max_wall = std::max(max_wall, r.wall_s);
              }
              j["cycles"] = {{"count", recs.size()},
                             {"non_ml_plans", fallback},
                             {"deadline_missed", missed},
                             {"max_wall_s", max_wall}};
            }
            send_json(res, j);
          }));
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::start(const std::string& host, int port) {
  impl_->stopping = false;
  return impl_->http.start(host, port);
}
void GatewayServer::run(const std::string& host, int port) { impl_->http.run(host, port); }
void GatewayServer::stop() {
  impl_->stopping = true;
  impl_->http.stop();
}
int GatewayServer::port() const { return impl_->http.port(); }

}  // namespace edgeml::rpc
