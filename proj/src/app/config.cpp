#include "edgeml/app/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"

namespace edgeml::app {

using nlohmann::json;

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Schema, std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

GatewayConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Schema, "config must be a JSON object");
  static const std::set<std::string> known = {
      "plant_config", "age_years", "cloud_url",  "gateway_url", "poll_interval_s", "period_s",
      "stability_delay_s", "quota", "drift_threshold", "auto_retrain", "data_dir", "listen", "model_name",
      "dataset_id", "strategy", "speedup"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) fail(ErrorKind::Schema, "unknown config key '" + k + "'");
  GatewayConfig c;
  read(j, "plant_config", c.plant_config);
  read(j, "age_years", c.age_years);
  read(j, "cloud_url", c.cloud_url);
  read(j, "gateway_url", c.gateway_url);
  read(j, "poll_interval_s", c.poll_interval_s);
  read(j, "period_s", c.period_s);
  read(j, "stability_delay_s", c.stability_delay_s);
  read(j, "drift_threshold", c.drift_threshold);
  read(j, "auto_retrain", c.auto_retrain);
  read(j, "data_dir", c.data_dir);
  read(j, "listen", c.listen);
  read(j, "model_name", c.model_name);
  read(j, "dataset_id", c.dataset_id);
  read(j, "strategy", c.strategy);
  read(j, "speedup", c.speedup);
  if (auto it = j.find("quota"); it != j.end()) {
    if (!it->is_object()) fail(ErrorKind::Schema, "config key 'quota' must be an object");
    read(*it, "max_ops", c.quota.max_ops);
    read(*it, "window_s", c.quota.window_s);
  }
  return c;
}

GatewayConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Syntax, path + ": " + e.what());
  }
  GatewayConfig c = config_from_json(j);
  validate(c);
  return c;
}

void validate(const GatewayConfig& c) {
  if (!(c.poll_interval_s > 0.0)) fail(ErrorKind::Domain, "poll_interval_s must be > 0");
  if (c.period_s <= 0) fail(ErrorKind::Domain, "period_s must be > 0");
  if (c.stability_delay_s <= 0) fail(ErrorKind::Domain, "stability_delay_s must be > 0");
  if (c.stability_delay_s >= c.period_s) fail(ErrorKind::Domain, "stability_delay_s must be < period_s");
  if (c.quota.max_ops <= 0 || c.quota.window_s <= 0) fail(ErrorKind::Domain, "quota values must be > 0");
  if (!(c.drift_threshold > 0.0)) fail(ErrorKind::Domain, "drift_threshold must be > 0");
  if (c.age_years < 0.0) fail(ErrorKind::Domain, "age_years must be >= 0");
  if (c.speedup < 0.0) fail(ErrorKind::Domain, "speedup must be >= 0");
  chillseq::parse_strategy(c.strategy);
}

void to_json(json& j, const GatewayConfig& c) {
  j = {{"plant_config", c.plant_config},
       {"age_years", c.age_years},
       {"cloud_url", c.cloud_url},
       {"gateway_url", c.gateway_url},
       {"poll_interval_s", c.poll_interval_s},
       {"period_s", c.period_s},
       {"stability_delay_s", c.stability_delay_s},
       {"quota", {{"max_ops", c.quota.max_ops}, {"window_s", c.quota.window_s}}},
       {"drift_threshold", c.drift_threshold},
       {"auto_retrain", c.auto_retrain},
       {"data_dir", c.data_dir},
       {"listen", c.listen},
       {"model_name", c.model_name},
       {"dataset_id", c.dataset_id},
       {"strategy", c.strategy},
       {"speedup", c.speedup}};
}

plantsim::PlantConfig plant_for(const GatewayConfig& c) {
  return c.plant_config.empty() ? chillseq::benchmark_plant(c.age_years) : plantsim::load_plant_config(c.plant_config);
}

chillseq::LoopOptions loop_options_for(const GatewayConfig& c, const plantsim::PlantConfig& plant) {
  chillseq::LoopOptions lo;
  lo.controller.period_s = c.period_s;
  lo.controller.stability_delay_s = c.stability_delay_s;
  lo.controller.strategy = chillseq::parse_strategy(c.strategy);
  lo.controller.model_name = c.model_name;
  lo.controller.age_years = plant.age_years;
  lo.ml.drift_threshold = c.drift_threshold;
  lo.ml.auto_retrain = c.auto_retrain;
  lo.quota = c.quota;
  if (!c.data_dir.empty()) lo.store.data_dir = std::filesystem::path(c.data_dir) / "tsdb";
  return lo;
}

}  // namespace edgeml::app
