#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "edgeml/gateway/device_manager.hpp"
#include "edgeml/plantsim/plant.hpp"

namespace edgeml::gateway {

/// Protocol "sim": devices are the chillers of a simulated plant plus the
/// weather station. Only `plr` is writable. `plant_mu` must also be held by
/// whoever steps the plant.
class SimAdapter final : public ProtocolAdapter {
 public:
  SimAdapter(plantsim::Plant& plant, std::mutex& plant_mu) : plant_(plant), mu_(plant_mu) {}

  std::string_view protocol() const override { return "sim"; }
  double read(std::string_view device_id, std::string_view property) override;
  void write(std::string_view device_id, std::string_view property, double value) override;

  static const std::vector<std::string>& chiller_properties();
  static const std::vector<std::string>& weather_properties();

  /// Descriptors for every chiller and the weather station of `plant`.
  static std::vector<DeviceDescriptor> descriptors(const plantsim::Plant& plant);

 private:
  plantsim::Plant& plant_;
  std::mutex& mu_;
};

}  // namespace edgeml::gateway
