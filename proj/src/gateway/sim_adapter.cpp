#include "edgeml/gateway/sim_adapter.hpp"

#include "edgeml/common/error.hpp"

namespace edgeml::gateway {

const std::vector<std::string>& SimAdapter::chiller_properties() {
  static const std::vector<std::string> props{"plr", "cooling_kw", "power_kw", "mass_flow_kg_s", "t_in_c", "t_out_c"};
  return props;
}

const std::vector<std::string>& SimAdapter::weather_properties() {
  static const std::vector<std::string> props{"t_ambient_c"};
  return props;
}

std::vector<DeviceDescriptor> SimAdapter::descriptors(const plantsim::Plant& plant) {
  std::vector<DeviceDescriptor> out;
  for (const auto& c : plant.config().chillers) out.push_back({c.id, "sim", chiller_properties()});
  out.push_back({std::string(plantsim::kWeatherDevice), "sim", weather_properties()});
  return out;
}

double SimAdapter::read(std::string_view device_id, std::string_view property) {
  std::lock_guard lock(mu_);
  if (device_id == plantsim::kWeatherDevice) {
    if (property == "t_ambient_c") return plant_.ambient_c();
  } else {
    const auto& st = plant_.state(plant_.index_of(device_id));
    if (property == "plr") return st.plr;
    if (property == "cooling_kw") return st.cooling_kw;
    if (property == "power_kw") return st.power_kw;
    if (property == "mass_flow_kg_s") return st.mass_flow_kg_s;
    if (property == "t_in_c") return st.t_in_c;
    if (property == "t_out_c") return st.t_out_c;
  }
  fail(ErrorKind::NotFound, "sim device '" + std::string(device_id) + "' has no property '" + std::string(property) + "'");
}

void SimAdapter::write(std::string_view device_id, std::string_view property, double value) {
  if (property != "plr") fail(ErrorKind::Domain, "property '" + std::string(property) + "' is read-only");
  std::lock_guard lock(mu_);
  plant_.set_plr(device_id, value);
}

}  // namespace edgeml::gateway
