#pragma once

#include <memory>
#include <string>

#include "edgeml/chillseq/controller.hpp"
#include "edgeml/gateway/device_manager.hpp"
#include "edgeml/mlrt/ml_manager.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::rpc {

/// Modules the gateway server exposes. Null members disable their routes
/// (they answer 503).
struct GatewayServices {
  gateway::DeviceManager* devices = nullptr;
  tsdb::Store* store = nullptr;
  mlrt::MlManager* ml = nullptr;
  chillseq::SequencingController* controller = nullptr;
};

/// JSON over HTTP.
///
///   GET  /context                       {key: {value, timestamp_ns, source}}
///   GET  /context/{key}
///   GET  /devices
///   PUT  /devices/{id}/{property}       {"value": x}
///   GET  /events?pattern=&max_events=&timeout_s=   NDJSON, one context update per line
///   POST /write                         NDJSON points {series, timestamp_ns, value}
///   GET  /query?series=&from=&to=       {series, points: [{timestamp_ns, value}]}
///   POST /models                        PortableModel document
///   GET  /models
///   POST /models/{name}/{version}/activate
///   POST /models/{name}/rollback
///   POST /models/{name}/retrain
///   GET  /models/{name}/drift
///   POST /predict                       {model | models, features?}
///   POST /demand                        {demand_kw, period_s?}
///   GET  /cycles/{id}
///   GET  /cycles?last=N
///   GET  /stats
class GatewayServer {
 public:
  explicit GatewayServer(GatewayServices services);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void run(const std::string& host, int port);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgeml::rpc
