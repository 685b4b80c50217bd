#include "edgeml/plantsim/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"

namespace edgeml::plantsim {

namespace {

constexpr double kPlrSlack = 1e-9;
constexpr double kSecondsPerDay = 86400.0;

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Domain, what);
}

}  // namespace

void validate(const ChillerSpec& s) {
  require(!s.id.empty(), "chiller id must be non-empty");
  require(s.rated_capacity_kw > 0.0, "chiller " + s.id + ": rated_capacity_kw must be > 0");
  require(s.nominal_cop >= 1.0 && s.nominal_cop <= 10.0, "chiller " + s.id + ": nominal_cop must lie in [1, 10]");
  require(s.min_plr > 0.0 && s.min_plr < 1.0, "chiller " + s.id + ": min_plr must lie in (0, 1)");
  require(s.curve_a >= 0.0 && s.curve_b >= 0.0 && s.aging_rate >= 0.0,
          "chiller " + s.id + ": curve_a, curve_b and aging_rate must be >= 0");
  require(s.model_code >= 0, "chiller " + s.id + ": model_code must be >= 0");
  require(s.mass_flow_kg_s >= 0.0, "chiller " + s.id + ": mass_flow_kg_s must be >= 0");
}

void validate(const PlantConfig& c) {
  require(!c.chillers.empty(), "plant needs at least one chiller");
  for (std::size_t i = 0; i < c.chillers.size(); ++i) {
    validate(c.chillers[i]);
    for (std::size_t j = 0; j < i; ++j)
      require(c.chillers[j].id != c.chillers[i].id, "duplicate chiller id " + c.chillers[i].id);
    require(c.chillers[i].aging_rate * c.age_years < 1.0, "chiller " + c.chillers[i].id + ": aging_rate * age must be < 1");
  }
  require(c.age_years >= 0.0, "age_years must be >= 0");
  require(c.sensor_noise_sigma >= 0.0, "sensor_noise_sigma must be >= 0");
  require(c.tick_seconds > 0, "tick_seconds must be > 0");
  require(!c.ambient_profile.empty(), "ambient_profile must not be empty");
  for (std::size_t i = 0; i < c.ambient_profile.size(); ++i) {
    double h = c.ambient_profile[i].hour;
    require(h >= 0.0 && h < 24.0, "ambient_profile hours must lie in [0, 24)");
    if (i > 0) require(h > c.ambient_profile[i - 1].hour, "ambient_profile hours must be strictly increasing");
  }
}

void validate(const DemandTrace& t) {
  require(!t.points.empty(), "demand trace must not be empty");
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    require(t.points[i].second >= 0.0 && std::isfinite(t.points[i].second), "demand must be finite and >= 0");
    if (i > 0) require(t.points[i].first > t.points[i - 1].first, "demand trace timestamps must be strictly increasing");
  }
}

double cop_true(const ChillerSpec& spec, double plr, double t_ambient_c, double age_years) {
  if (!(plr >= spec.min_plr - kPlrSlack && plr <= 1.0 + kPlrSlack))
    fail(ErrorKind::Domain, "plr " + std::to_string(plr) + " outside [min_plr, 1] for chiller " + spec.id);
  const double d = plr - 0.75;
  const double cop = spec.nominal_cop * (1.0 - spec.curve_a * d * d) * (1.0 - spec.curve_b * (t_ambient_c - 7.0)) *
                     (1.0 - spec.aging_rate * age_years);
  if (!(cop > 0.0)) fail(ErrorKind::Domain, "non-positive COP for chiller " + spec.id);
  return cop;
}

double ambient_at(std::span<const AmbientPoint> profile, double t_s) {
  if (profile.empty()) fail(ErrorKind::Domain, "empty ambient profile");
  if (profile.size() == 1) return profile.front().t_c;
  double hour = std::fmod(t_s, kSecondsPerDay) / 3600.0;
  if (hour < 0.0) hour += 24.0;
  // Find the segment [a, b] containing hour, wrapping from the last point to
  // the first one across midnight.
  auto upper = std::upper_bound(profile.begin(), profile.end(), hour,
                                [](double h, const AmbientPoint& p) { return h < p.hour; });
  const AmbientPoint* a;
  const AmbientPoint* b;
  double span_h;
  double into_h;
  if (upper == profile.begin() || upper == profile.end()) {
    a = &profile.back();
    b = &profile.front();
    span_h = b->hour + 24.0 - a->hour;
    into_h = hour >= a->hour ? hour - a->hour : hour + 24.0 - a->hour;
  } else {
    b = &*upper;
    a = &*(upper - 1);
    span_h = b->hour - a->hour;
    into_h = hour - a->hour;
  }
  return a->t_c + (b->t_c - a->t_c) * (into_h / span_h);
}

double demand_at(const DemandTrace& trace, std::int64_t t_s) {
  if (trace.points.empty()) fail(ErrorKind::Domain, "empty demand trace");
  auto it = std::upper_bound(trace.points.begin(), trace.points.end(), t_s,
                             [](std::int64_t t, const auto& p) { return t < p.first; });
  if (it == trace.points.begin()) return trace.points.front().second;
  return std::prev(it)->second;
}

bool plr_admissible(const ChillerSpec& spec, double plr) {
  if (plr == 0.0) return true;
  return plr >= spec.min_plr - kPlrSlack && plr <= 1.0 + kPlrSlack;
}

std::string series_key(std::string_view device_id, std::string_view property) {
  std::string key = "device.";
  key.append(device_id).append(".").append(property);
  return key;
}

Plant::Plant(PlantConfig config) : config_(std::move(config)), rng_(config_.seed) {
  validate(config_);
  states_.resize(config_.chillers.size());
  refresh_states();
}

void Plant::apply_setpoints(std::span<const double> plrs) {
  if (plrs.size() != config_.chillers.size())
    fail(ErrorKind::Domain, "setpoint vector has " + std::to_string(plrs.size()) + " entries, plant has " +
                                std::to_string(config_.chillers.size()) + " chillers");
  for (std::size_t i = 0; i < plrs.size(); ++i) {
    if (!plr_admissible(config_.chillers[i], plrs[i]))
      fail(ErrorKind::Domain, "plr " + std::to_string(plrs[i]) + " rejected for chiller " + config_.chillers[i].id);
  }
  for (std::size_t i = 0; i < plrs.size(); ++i) states_[i].plr = std::min(plrs[i], 1.0);
  refresh_states();
}

void Plant::set_plr(std::string_view chiller_id, double plr) {
  std::size_t i = index_of(chiller_id);
  if (!plr_admissible(config_.chillers[i], plr))
    fail(ErrorKind::Domain, "plr " + std::to_string(plr) + " rejected for chiller " + config_.chillers[i].id);
  states_[i].plr = std::min(plr, 1.0);
  refresh_states();
}

std::size_t Plant::index_of(std::string_view chiller_id) const {
  for (std::size_t i = 0; i < config_.chillers.size(); ++i)
    if (config_.chillers[i].id == chiller_id) return i;
  fail(ErrorKind::NotFound, "unknown chiller " + std::string(chiller_id));
}

std::vector<double> Plant::plrs() const {
  std::vector<double> out;
  out.reserve(states_.size());
  for (const auto& s : states_) out.push_back(s.plr);
  return out;
}

double Plant::ambient_c() const { return ambient_at(config_.ambient_profile, static_cast<double>(now_s_)); }

void Plant::refresh_states() {
  const double t_amb = ambient_c();
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const ChillerSpec& spec = config_.chillers[i];
    ChillerState& st = states_[i];
    if (st.plr == 0.0) {
      st = ChillerState{};
      continue;
    }
    st.online = true;
    st.cooling_kw = st.plr * spec.rated_capacity_kw;
    st.power_kw = st.cooling_kw / cop_true(spec, st.plr, t_amb, config_.age_years);
    st.mass_flow_kg_s = spec.design_flow_kg_s();
    st.t_out_c = kSupplyTempC;
    st.t_in_c = kSupplyTempC + st.cooling_kw / (st.mass_flow_kg_s * kWaterCp);
  }
}

std::vector<TimePoint> Plant::step(std::int64_t dt_s) {
  if (dt_s <= 0) fail(ErrorKind::Domain, "step dt must be > 0");
  now_s_ += dt_s;
  refresh_states();
  const double hours = static_cast<double>(dt_s) / 3600.0;
  for (const auto& st : states_) {
    energy_kwh_ += st.power_kw * hours;
    cooling_kwh_ += st.cooling_kw * hours;
  }

  const TimestampNs ts = now_ns();
  const double sigma = config_.sensor_noise_sigma;
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  auto noisy = [&](double v) { return sigma > 0.0 ? v + noise(rng_) : v; };

  std::vector<TimePoint> out;
  out.reserve(states_.size() * 5 + 1);
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const std::string& id = config_.chillers[i].id;
    const ChillerState& st = states_[i];
    out.push_back({series_key(id, "plr"), ts, st.plr});
    if (st.online) {
      out.push_back({series_key(id, "power_kw"), ts, noisy(st.power_kw)});
      out.push_back({series_key(id, "mass_flow_kg_s"), ts, noisy(st.mass_flow_kg_s)});
      out.push_back({series_key(id, "t_in_c"), ts, noisy(st.t_in_c)});
      out.push_back({series_key(id, "t_out_c"), ts, noisy(st.t_out_c)});
    } else {
      // a stopped chiller's meters read exactly zero flow and power
      out.push_back({series_key(id, "power_kw"), ts, 0.0});
      out.push_back({series_key(id, "mass_flow_kg_s"), ts, 0.0});
      out.push_back({series_key(id, "t_in_c"), ts, st.t_in_c});
      out.push_back({series_key(id, "t_out_c"), ts, st.t_out_c});
    }
  }
  out.push_back({series_key(kWeatherDevice, "t_ambient_c"), ts, noisy(ambient_c())});
  return out;
}

// --- JSON -------------------------------------------------------------------

void to_json(nlohmann::json& j, const ChillerSpec& s) {
  j = nlohmann::json{{"id", s.id},
                     {"rated_capacity_kw", s.rated_capacity_kw},
                     {"nominal_cop", s.nominal_cop},
                     {"min_plr", s.min_plr},
                     {"curve_a", s.curve_a},
                     {"curve_b", s.curve_b},
                     {"aging_rate", s.aging_rate},
                     {"model_code", s.model_code}};
  if (s.mass_flow_kg_s > 0.0) j["mass_flow_kg_s"] = s.mass_flow_kg_s;
}

void from_json(const nlohmann::json& j, ChillerSpec& s) {
  s.id = j.at("id").get<std::string>();
  s.rated_capacity_kw = j.at("rated_capacity_kw").get<double>();
  s.nominal_cop = j.at("nominal_cop").get<double>();
  s.min_plr = j.value("min_plr", kDefaultMinPlr);
  s.curve_a = j.value("curve_a", 0.0);
  s.curve_b = j.value("curve_b", 0.0);
  s.aging_rate = j.value("aging_rate", 0.0);
  s.model_code = j.value("model_code", std::int64_t{0});
  s.mass_flow_kg_s = j.value("mass_flow_kg_s", 0.0);
}

void to_json(nlohmann::json& j, const PlantConfig& c) {
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& p : c.ambient_profile) profile.push_back({p.hour, p.t_c});
  j = nlohmann::json{{"chillers", c.chillers},
                     {"age_years", c.age_years},
                     {"ambient_profile", profile},
                     {"sensor_noise_sigma", c.sensor_noise_sigma},
                     {"seed", c.seed},
                     {"tick_seconds", c.tick_seconds}};
}

void from_json(const nlohmann::json& j, PlantConfig& c) {
  c.chillers = j.at("chillers").get<std::vector<ChillerSpec>>();
  c.age_years = j.value("age_years", 0.0);
  c.ambient_profile.clear();
  for (const auto& p : j.at("ambient_profile")) c.ambient_profile.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  c.sensor_noise_sigma = j.value("sensor_noise_sigma", 0.0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.tick_seconds = j.value("tick_seconds", std::int64_t{1});
}

void to_json(nlohmann::json& j, const DemandTrace& t) {
  j = nlohmann::json::array();
  for (const auto& [ts, kw] : t.points) j.push_back({ts, kw});
}

void from_json(const nlohmann::json& j, DemandTrace& t) {
  t.points.clear();
  for (const auto& p : j) t.points.emplace_back(p.at(0).get<std::int64_t>(), p.at(1).get<double>());
}

namespace {
nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Syntax, path + ": " + e.what());
  }
}
}  // namespace

PlantConfig load_plant_config(const std::string& path) {
  PlantConfig c;
  try {
    c = read_json_file(path).get<PlantConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Syntax, path + ": " + e.what());
  }
  validate(c);
  return c;
}

DemandTrace load_demand_trace(const std::string& path) {
  DemandTrace t;
  try {
    t = read_json_file(path).get<DemandTrace>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Syntax, path + ": " + e.what());
  }
  validate(t);
  return t;
}

}  // namespace edgeml::plantsim
