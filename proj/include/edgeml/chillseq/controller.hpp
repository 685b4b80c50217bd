#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/chillseq/planner.hpp"
#include "edgeml/common/clock.hpp"
#include "edgeml/mlrt/ml_manager.hpp"

namespace edgeml::tsdb {
class Store;
}
namespace edgeml::gateway {
class DeviceManager;
}

namespace edgeml::chillseq {

using mlrt::FeatureMap;

/// Feature names of the COP model, in the order the controller builds them.
inline constexpr const char* kFeaturePlr = "plr";
inline constexpr const char* kFeatureAmbient = "t_ambient_c";
inline constexpr const char* kFeatureAge = "age_years";
inline constexpr const char* kFeatureModelCode = "model_code";
std::vector<std::string> cop_feature_names();

/// Returns a COP prediction; throws edgeml::Error when none is available.
using Predictor = std::function<mlrt::Prediction(const FeatureMap& features)>;

/// Predictor backed by an MlManager: `predict(model)` or, with ensemble
/// members, `predict_ensemble(members)` tagged with the first member's version.
Predictor ml_predictor(mlrt::MlManager& ml, std::string model, std::vector<std::string> ensemble = {});

/// What the COP model predicts. DatasheetRatio models learn the factor
/// between the measured COP and the manufacturer curve, so a plant that
/// matches its datasheet yields a model close to 1 everywhere.
enum class ModelTarget { Cop, DatasheetRatio };
std::string_view to_string(ModelTarget t);
ModelTarget parse_model_target(std::string_view name);

/// COP per chiller and candidate plr: the prediction when verify_cop accepts
/// it, otherwise the manufacturer value.
class CopEstimator {
 public:
  CopEstimator(std::vector<ChillerSpec> specs, double age_years, Predictor predictor = {},
               ModelTarget target = ModelTarget::Cop);

  CopEstimate estimate(std::size_t chiller, double plr, double t_ambient_c) const;
  CopEstimate manufacturer(std::size_t chiller, double plr, double t_ambient_c) const;
  FeatureMap features(std::size_t chiller, double plr, double t_ambient_c) const;
  /// The value a model of this target is trained on for a measured COP.
  double to_model_label(std::size_t chiller, double plr, double t_ambient_c, double cop) const;
  ModelTarget target() const { return target_; }

  std::optional<double> last_accepted(std::size_t chiller) const { return last_.at(chiller); }
  void set_last_accepted(std::size_t chiller, double value) { last_.at(chiller) = value; }

  const std::vector<ChillerSpec>& specs() const { return specs_; }
  bool has_predictor() const { return static_cast<bool>(predictor_); }
  void set_predictor(Predictor p) { predictor_ = std::move(p); }

 private:
  std::vector<ChillerSpec> specs_;
  double age_years_;
  Predictor predictor_;
  ModelTarget target_;
  std::vector<std::optional<double>> last_;
};

enum class Strategy { Ml, Manufacturer };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct ControllerOptions {
  Strategy strategy = Strategy::Ml;
  std::int64_t period_s = 900;
  std::int64_t stability_delay_s = 300;
  double age_years = 0.0;
  PlannerOptions planner;
  std::string model_name = "cop";
  ModelTarget target = ModelTarget::DatasheetRatio;
  /// Non-empty: estimates use the median of these models.
  std::vector<std::string> ensemble;
  std::string ambient_key = "device.weather.t_ambient_c";
};

struct CoolingDemand {
  double demand_kw = 0.0;
  TimestampNs issued_at = 0;
  std::int64_t period_s = 900;
};

struct CycleRecord {
  std::int64_t cycle_id = 0;
  CoolingDemand demand;
  SequencingPlan plan;
  /// ml | manufacturer | transition | previous | manual
  std::string plan_source;
  /// One per chiller that the executed plan runs.
  std::vector<CopEstimate> estimates;
  double t_ambient_c = 0.0;
  /// Mean ambient over the stability window once the cycle completed.
  std::optional<double> window_ambient_c;
  TimestampNs executed_at = 0;
  double wall_s = 0.0;
  bool pending = true;
  std::map<std::string, double> actual_cop;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

void to_json(nlohmann::json& j, const CycleRecord& r);

/// The sequencing application: estimate -> plan -> verify -> execute, then a
/// delayed COP computation that labels the cycle's retained features.
///
/// run_cycle calls are serialized. complete_due_cycles may run on another
/// thread.
class SequencingController {
 public:
  SequencingController(std::vector<ChillerSpec> specs, gateway::DeviceManager& devices, tsdb::Store& history,
                       const Clock& clock, mlrt::MlManager* ml, ControllerOptions options,
                       Predictor predictor = {});

  CycleRecord run_cycle(const CoolingDemand& demand);
  /// Executes a given plan as a cycle (commissioning sweeps). The plan is
  /// neither optimized nor verified.
  CycleRecord execute_plan(const CoolingDemand& demand, std::vector<double> plrs);

  /// Computes the COP of every cycle whose stability window has closed and
  /// labels it. Returns the number of cycles completed.
  std::size_t complete_due_cycles();

  std::optional<CycleRecord> cycle(std::int64_t id) const;
  std::vector<CycleRecord> last_cycles(std::size_t n) const;
  std::size_t cycle_count() const;
  std::optional<std::vector<double>> previous_plan() const;

  CopEstimator& estimator() { return estimator_; }
  const CopEstimator& estimator() const { return estimator_; }
  const ControllerOptions& options() const { return options_; }

 private:
  struct Pending {
    std::int64_t cycle_id;
    TimestampNs window_from;
    TimestampNs window_to;
  };

  double read_ambient() const;
  /// Writes the record's plan, updates the verification state, retains the
  /// features to label and files the record.
  CycleRecord commit(CycleRecord record, std::chrono::steady_clock::time_point wall_start);
  void label(CycleRecord& record, TimestampNs from, TimestampNs to);

  std::vector<ChillerSpec> specs_;
  gateway::DeviceManager& devices_;
  tsdb::Store& history_;
  const Clock& clock_;
  mlrt::MlManager* ml_;
  ControllerOptions options_;
  CopEstimator estimator_;
  bool ml_labels_;

  mutable std::mutex cycle_mu_;  // serializes run_cycle / execute_plan
  std::optional<std::vector<double>> previous_;
  std::int64_t next_cycle_ = 1;

  mutable std::mutex records_mu_;
  std::map<std::int64_t, CycleRecord> records_;
  std::vector<Pending> pending_;
};

}  // namespace edgeml::chillseq
