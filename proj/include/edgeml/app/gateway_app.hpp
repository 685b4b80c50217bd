#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "edgeml/app/config.hpp"
#include "edgeml/boost/portable.hpp"
#include "edgeml/chillseq/closed_loop.hpp"
#include "edgeml/cloud/sync.hpp"
#include "edgeml/rpc/gateway_server.hpp"

namespace edgeml::app {

struct GatewayRunOptions {
  /// Simulated seconds to run; nullopt runs until stop().
  std::optional<std::int64_t> duration_s;
  /// Model deployed and activated before the first cycle.
  std::optional<boost::PortableModel> model;
  /// Days of commissioning sweep used to train a first model when no model
  /// is given. 0 skips it (the controller falls back to the datasheet until
  /// the cloud supplies a model).
  double commissioning_days = 0.0;
  /// Serve the RPC API on config.listen.
  bool serve = true;
};

/// The edge gateway process: simulated plant, closed loop, RPC server and
/// optional cloud sync, advanced in simulated time at config.speedup.
class GatewayApp {
 public:
  GatewayApp(GatewayConfig config, GatewayRunOptions options = {});
  ~GatewayApp();

  GatewayApp(const GatewayApp&) = delete;
  GatewayApp& operator=(const GatewayApp&) = delete;

  /// Binds the server and starts the sync thread. Returns the bound port (0
  /// when not serving).
  int start();
  /// Advances the loop until duration_s or stop(). On exit flushes the store
  /// and, with a cloud, stops the sync thread after one last sync.
  void run();
  /// Safe from any thread or a signal-driven watcher.
  void stop() { stop_.store(true); }

  chillseq::ClosedLoop& loop() { return *loop_; }
  /// Demand profile the loop follows: chillseq::plant_trace.
  const plantsim::DemandTrace& trace() const { return trace_; }
  /// Result of the sync run() made on exit.
  const std::optional<cloud::SyncReport>& final_sync() const { return final_sync_; }

 private:
  void extend_trace(std::int64_t until_s);

  GatewayConfig config_;
  GatewayRunOptions options_;
  std::unique_ptr<chillseq::ClosedLoop> loop_;
  std::unique_ptr<rpc::GatewayServer> server_;
  std::unique_ptr<cloud::CloudSync> sync_;
  plantsim::DemandTrace trace_;
  std::optional<cloud::SyncReport> final_sync_;
  std::atomic<bool> stop_{false};
};

}  // namespace edgeml::app
