#include "edgeml/app/gateway_app.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "edgeml/cloud/client.hpp"
#include "edgeml/common/error.hpp"
#include "edgeml/rpc/http.hpp"

namespace edgeml::app {

namespace {

constexpr std::int64_t kTraceDays = 7;
// Simulated seconds advanced between pacing checks and stop polls.
constexpr std::int64_t kStepS = 60;

}  // namespace

GatewayApp::GatewayApp(GatewayConfig config, GatewayRunOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  validate(config_);
  const plantsim::PlantConfig plant = plant_for(config_);
  const chillseq::LoopOptions lo = loop_options_for(config_, plant);

  std::optional<boost::PortableModel> model = options_.model;
  if (!model && options_.commissioning_days > 0.0) {
    const boost::Dataset data = chillseq::commissioning_dataset(plant, options_.commissioning_days, lo, 7);
    model = chillseq::train_cop_model(data, boost::AdaBoostParams{60, boost::LossKind::Linear, 6}, config_.model_name);
  }
  loop_ = std::make_unique<chillseq::ClosedLoop>(plant, lo);
  if (model) {
    auto rec = loop_->ml().deploy(*model);
    loop_->ml().activate(rec.name, rec.version);
  }
  extend_trace(loop_->plant().now_s() + kTraceDays * 86400);
}

GatewayApp::~GatewayApp() {
  if (sync_) sync_->stop();
  if (server_) server_->stop();
}

void GatewayApp::extend_trace(std::int64_t until_s) {
  const double days = std::ceil(static_cast<double>(until_s) / 86400.0) + 1.0;
  trace_ = chillseq::plant_trace(loop_->plant().config(), days, config_.period_s);
}

int GatewayApp::start() {
  int port = 0;
  if (options_.serve) {
    server_ = std::make_unique<rpc::GatewayServer>(
        rpc::GatewayServices{&loop_->devices(), &loop_->store(), &loop_->ml(), &loop_->controller()});
    const rpc::Endpoint ep = rpc::parse_endpoint(config_.listen);
    port = server_->start(ep.host, ep.port);
  }
  if (!config_.cloud_url.empty()) {
    cloud::SyncOptions so;
    so.models = {config_.model_name};
    so.dataset_id = config_.dataset_id;
    so.poll_interval_s = config_.poll_interval_s;
    sync_ = std::make_unique<cloud::CloudSync>(cloud::CloudClient(config_.cloud_url), loop_->ml(), so);
    sync_->start();
  }
  return port;
}

void GatewayApp::run() {
  const std::int64_t start_s = loop_->plant().now_s();
  const std::optional<std::int64_t> end_s =
      options_.duration_s ? std::optional<std::int64_t>(start_s + *options_.duration_s) : std::nullopt;
  const auto wall_start = std::chrono::steady_clock::now();
  while (!stop_.load()) {
    const std::int64_t now = loop_->plant().now_s();
    if (end_s && now >= *end_s) break;
    std::int64_t next = now + kStepS;
    if (end_s) next = std::min(next, *end_s);
    if (next + 86400 > trace_.points.back().first) extend_trace(next + kTraceDays * 86400);
    loop_->run_until(next, trace_);
    if (config_.speedup > 0.0) {
      const auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>((next - start_s) / config_.speedup));
      while (!stop_.load() && std::chrono::steady_clock::now() < due)
        std::this_thread::sleep_until(std::min(due, std::chrono::steady_clock::now() + std::chrono::milliseconds(100)));
    }
  }
  loop_->store().flush();
  if (sync_) {
    sync_->stop();
    final_sync_ = sync_->sync_once();
  }
}

}  // namespace edgeml::app
