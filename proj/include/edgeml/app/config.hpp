#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/chillseq/closed_loop.hpp"
#include "edgeml/gateway/device_manager.hpp"

namespace edgeml::app {

/// Settings shared by the `edgeml` subcommands. Loaded from a JSON file; every
/// key is optional and unknown keys are rejected.
struct GatewayConfig {
  /// Plant description (JSON). Empty uses the built-in three-chiller plant.
  std::string plant_config;
  /// Age of the built-in plant.
  double age_years = 4.0;
  std::string cloud_url;
  /// Gateway RPC address used by client subcommands.
  std::string gateway_url = "http://127.0.0.1:8080";
  double poll_interval_s = 60.0;
  std::int64_t period_s = 900;
  std::int64_t stability_delay_s = 300;
  gateway::AccessQuota quota;
  double drift_threshold = 0.15;
  /// Retrain locally when the drift alarm trips.
  bool auto_retrain = false;
  /// Empty keeps the store and the cloud side in memory.
  std::string data_dir;
  /// host:port the gateway or cloud server binds.
  std::string listen = "127.0.0.1:8080";
  std::string model_name = "cop";
  std::string dataset_id = "uplink";
  std::string strategy = "ml";
  /// Simulated seconds per wall-clock second for `gateway run`; 0 runs
  /// unpaced.
  double speedup = 60.0;
};

/// Error{Schema} for unknown keys or wrong types.
GatewayConfig config_from_json(const nlohmann::json& j);
/// Error{Io} when unreadable, Error{Syntax} for bad JSON, plus the errors of
/// config_from_json and validate.
GatewayConfig load_config(const std::string& path);
/// Error{Domain} for non-positive durations or an invalid quota.
void validate(const GatewayConfig& c);
void to_json(nlohmann::json& j, const GatewayConfig& c);

plantsim::PlantConfig plant_for(const GatewayConfig& c);
/// The controller's age comes from `plant`.
chillseq::LoopOptions loop_options_for(const GatewayConfig& c, const plantsim::PlantConfig& plant);

}  // namespace edgeml::app
