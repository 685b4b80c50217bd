#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/boost/adaboost_r2.hpp"
#include "edgeml/boost/portable.hpp"
#include "edgeml/chillseq/controller.hpp"
#include "edgeml/gateway/device_manager.hpp"
#include "edgeml/mlrt/ml_manager.hpp"
#include "edgeml/plantsim/plant.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::chillseq {

struct LoopOptions {
  ControllerOptions controller;
  mlrt::MlOptions ml;
  gateway::AccessQuota quota;
  tsdb::StoreOptions store;
};

/// Plant, store, device manager, ML manager and controller wired together on
/// one simulated clock.
class ClosedLoop {
 public:
  /// Overrides the plan of a cycle (commissioning); nullopt lets the
  /// controller plan.
  using PlanOverride = std::function<std::optional<std::vector<double>>(std::int64_t cycle_index, double demand_kw)>;

  explicit ClosedLoop(plantsim::PlantConfig plant, LoopOptions options = {}, Predictor predictor = {});
  ~ClosedLoop();

  ClosedLoop(const ClosedLoop&) = delete;
  ClosedLoop& operator=(const ClosedLoop&) = delete;

  /// Steps the plant to `end_s`, starting a cycle every period_s and
  /// completing each cycle once its stability window has closed.
  void run_until(std::int64_t end_s, const plantsim::DemandTrace& trace, const PlanOverride& override_plan = {});
  /// Completes the cycles whose window has closed by now.
  std::size_t settle() { return controller_->complete_due_cycles(); }

  plantsim::Plant& plant() { return plant_; }
  std::mutex& plant_mutex() { return plant_mu_; }
  ManualClock& clock() { return clock_; }
  tsdb::Store& store() { return store_; }
  gateway::DeviceManager& devices() { return *devices_; }
  mlrt::MlManager& ml() { return *ml_; }
  SequencingController& controller() { return *controller_; }
  std::int64_t cycles_started() const { return cycles_started_; }

 private:
  plantsim::Plant plant_;
  LoopOptions options_;
  std::mutex plant_mu_;
  ManualClock clock_;
  tsdb::Store store_;
  std::unique_ptr<gateway::DeviceManager> devices_;
  std::unique_ptr<mlrt::MlManager> ml_;
  std::unique_ptr<SequencingController> controller_;
  std::int64_t next_cycle_s_;
  std::int64_t cycles_started_ = 0;
};

/// Labelled COP samples (features in cop_feature_names() order) from every
/// completed cycle of a controller.
boost::Dataset labelled_dataset(const SequencingController& controller);

/// Runs `days` of cycles with every chiller on at a random grid plr and
/// returns the measured COPs.
boost::Dataset commissioning_dataset(const plantsim::PlantConfig& plant, double days, const LoopOptions& options,
                                     std::uint64_t seed);

boost::PortableModel train_cop_model(const boost::Dataset& data, const boost::AdaBoostParams& params,
                                     const std::string& name = "cop", std::int64_t version = 1,
                                     const std::string& dataset_id = "commissioning");

/// Demand following a raised cosine between base_kw (04:00) and peak_kw
/// (16:00), one point every step_s.
plantsim::DemandTrace diurnal_trace(double days, double base_kw, double peak_kw, std::int64_t step_s = 900);

/// diurnal_trace scaled to the plant: 150 to 600 kW per 1100 kW of rated
/// capacity (the benchmark plant's own range).
plantsim::DemandTrace plant_trace(const plantsim::PlantConfig& plant, double days, std::int64_t step_s = 900);

/// Three chillers: two older 300 kW units that lose aging_rate of their COP
/// per year and a newer 500 kW variable-speed unit (lower nominal COP, flatter
/// part-load curve) that does not age.
plantsim::PlantConfig benchmark_plant(double age_years, double noise_sigma = 0.0, double aging_rate = 0.05,
                                      std::uint64_t seed = 42);

struct BenchmarkOptions {
  LoopOptions loop;
  double commissioning_days = 2.0;
  double eval_days = 7.0;
  boost::AdaBoostParams boost{60, boost::LossKind::Linear, 6};
  std::uint64_t seed = 7;
  /// Skips commissioning and training when set.
  std::optional<boost::PortableModel> model;
  bool keep_cycle_log = false;
};

struct CycleSummary {
  std::int64_t cycle_id = 0;
  double demand_kw = 0.0;
  std::vector<double> plrs;
  std::string plan_source;
  double expected_power_kw = 0.0;
};

struct StrategyResult {
  double total_kwh = 0.0;
  std::int64_t cycles = 0;
  double savings_pct = 0.0;  // relative to the manufacturer strategy
  std::int64_t fallback_cycles = 0;
  std::vector<CycleSummary> log;
};

struct BenchmarkReport {
  std::map<std::string, StrategyResult> strategies;
  std::size_t training_samples = 0;
  std::size_t model_rounds = 0;
  double runtime_s = 0.0;
};

/// Runs the closed loop once per strategy over identical plants and seeds and
/// reports the true electrical energy.
BenchmarkReport benchmark_strategies(const plantsim::PlantConfig& plant, const plantsim::DemandTrace& trace,
                                     const std::vector<Strategy>& strategies, const BenchmarkOptions& options = {});

void to_json(nlohmann::json& j, const CycleSummary& c);
void to_json(nlohmann::json& j, const StrategyResult& r);
void to_json(nlohmann::json& j, const BenchmarkReport& r);

}  // namespace edgeml::chillseq
