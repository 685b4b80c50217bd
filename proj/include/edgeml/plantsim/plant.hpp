#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/common/clock.hpp"
#include "edgeml/common/time_point.hpp"

namespace edgeml::plantsim {

/// Specific heat of water, kJ/(kg·K).
inline constexpr double kWaterCp = 4.186;
/// Chilled-water supply temperature held by every online chiller.
inline constexpr double kSupplyTempC = 7.0;
inline constexpr double kDefaultMinPlr = 0.3;
/// Design temperature rise used when a chiller does not state its flow.
inline constexpr double kDesignDeltaTK = 5.0;
inline constexpr std::string_view kWeatherDevice = "weather";

struct ChillerSpec {
  std::string id;
  double rated_capacity_kw = 0.0;
  double nominal_cop = 0.0;
  double min_plr = kDefaultMinPlr;
  double curve_a = 0.0;     // part-load curvature
  double curve_b = 0.0;     // ambient sensitivity per K
  double aging_rate = 0.0;  // fractional COP loss per year
  std::int64_t model_code = 0;
  // Constant chilled-water flow while on; 0 selects capacity / (cp · 5 K).
  double mass_flow_kg_s = 0.0;

  double design_flow_kg_s() const {
    return mass_flow_kg_s > 0.0 ? mass_flow_kg_s : rated_capacity_kw / (kWaterCp * kDesignDeltaTK);
  }
};

struct ChillerState {
  double plr = 0.0;
  double cooling_kw = 0.0;
  double power_kw = 0.0;
  double mass_flow_kg_s = 0.0;
  double t_in_c = kSupplyTempC;
  double t_out_c = kSupplyTempC;
  bool online = false;
};

struct AmbientPoint {
  double hour = 0.0;
  double t_c = 0.0;
};

struct PlantConfig {
  std::vector<ChillerSpec> chillers;
  double age_years = 0.0;
  std::vector<AmbientPoint> ambient_profile;
  double sensor_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::int64_t tick_seconds = 1;
};

struct DemandTrace {
  std::vector<std::pair<std::int64_t, double>> points;  // (timestamp_s, demand_kw)
};

/// Throws Error{Domain} describing the first violated constraint.
void validate(const ChillerSpec& spec);
void validate(const PlantConfig& config);
void validate(const DemandTrace& trace);

/// Ground-truth coefficient of performance of a chiller at a part-load ratio.
/// Concave in plr with its peak at 0.75, linear in ambient and in age.
double cop_true(const ChillerSpec& spec, double plr, double t_ambient_c, double age_years);

/// Ambient temperature at simulation time `t_s`, interpolated linearly and
/// wrapping around midnight.
double ambient_at(std::span<const AmbientPoint> profile, double t_s);

/// Step interpolation: the last point at or before t, or the first point if
/// t precedes the trace.
double demand_at(const DemandTrace& trace, std::int64_t t_s);

/// True when plr is 0 or within [min_plr, 1] (1e-9 slack for grid rounding).
bool plr_admissible(const ChillerSpec& spec, double plr);

std::string series_key(std::string_view device_id, std::string_view property);

/// Deterministic chiller plant. Not thread-safe; callers serialize stepping.
class Plant {
 public:
  explicit Plant(PlantConfig config);

  /// Replaces every chiller's plr. Rejects (Error{Domain}) without changing
  /// state when the length or any entry is out of range.
  void apply_setpoints(std::span<const double> plrs);
  void set_plr(std::string_view chiller_id, double plr);

  /// Advances the clock by dt_s and returns the readings at the new instant:
  /// per chiller plr, power_kw, mass_flow_kg_s, t_in_c, t_out_c, then ambient.
  std::vector<TimePoint> step(std::int64_t dt_s);

  std::int64_t now_s() const { return now_s_; }
  TimestampNs now_ns() const { return now_s_ * kNsPerSecond; }
  double ambient_c() const;

  const PlantConfig& config() const { return config_; }
  std::size_t chiller_count() const { return config_.chillers.size(); }
  std::size_t index_of(std::string_view chiller_id) const;
  const ChillerState& state(std::size_t i) const { return states_.at(i); }
  std::vector<double> plrs() const;

  /// Cumulative noise-free electrical energy since construction.
  double true_energy_kwh() const { return energy_kwh_; }
  double true_cooling_kwh() const { return cooling_kwh_; }

 private:
  void refresh_states();

  PlantConfig config_;
  std::vector<ChillerState> states_;
  std::int64_t now_s_ = 0;
  double energy_kwh_ = 0.0;
  double cooling_kwh_ = 0.0;
  std::mt19937_64 rng_;
};

void to_json(nlohmann::json& j, const ChillerSpec& s);
void from_json(const nlohmann::json& j, ChillerSpec& s);
void to_json(nlohmann::json& j, const PlantConfig& c);
void from_json(const nlohmann::json& j, PlantConfig& c);
void to_json(nlohmann::json& j, const DemandTrace& t);
void from_json(const nlohmann::json& j, DemandTrace& t);

PlantConfig load_plant_config(const std::string& path);
DemandTrace load_demand_trace(const std::string& path);

}  // namespace edgeml::plantsim
