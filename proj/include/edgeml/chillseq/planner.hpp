#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/plantsim/plant.hpp"

namespace edgeml::chillseq {

using plantsim::ChillerSpec;

inline constexpr double kCopMin = 1.0;
inline constexpr double kCopMax = 10.0;
inline constexpr double kMaxCopJump = 2.0;
inline constexpr double kPlrStep = 0.05;
inline constexpr int kMaxTransitions = 2;
inline constexpr double kMaxPlrChange = 0.4;
/// Slack on cooling and plr comparisons so grid rounding never flips a verdict.
inline constexpr double kPlanSlack = 1e-9;

/// Datasheet COP: the true curve of a new chiller. Error{Domain} when plr is
/// outside [min_plr, 1].
double manufacturer_cop(const ChillerSpec& spec, double plr, double t_ambient_c);

enum class CopSource { Predicted, Manufacturer };
std::string_view to_string(CopSource s);

struct CopEstimate {
  std::string chiller_id;
  double plr = 0.0;
  double value = 0.0;
  CopSource source = CopSource::Manufacturer;
  std::optional<std::int64_t> model_version;
};

struct Verdict {
  bool accepted = true;
  std::string reason;

  static Verdict accept() { return {}; }
  static Verdict reject(std::string why) { return {false, std::move(why)}; }
  explicit operator bool() const { return accepted; }
};

/// Accepts values in [1, 10] that move at most 2.0 from the last accepted one.
Verdict verify_cop(double value, std::optional<double> last_accepted);

/// Nonzero operating points of a chiller: min_plr, min_plr + step, ..., 1.0.
std::vector<double> plr_grid(const ChillerSpec& spec, double step = kPlrStep);

struct SequencingPlan {
  std::vector<double> plrs;
  double expected_power_kw = 0.0;
  double expected_cooling_kw = 0.0;
  bool feasible = true;
};

/// COP of chiller `index` at a nonzero grid plr.
using CopFn = std::function<CopEstimate(std::size_t index, double plr)>;

struct PlannerOptions {
  double plr_step = kPlrStep;
  /// Up to this many chillers are planned by full enumeration.
  std::size_t exhaustive_limit = 3;
};

/// Minimum-power grid plan covering demand_kw. Power is Σ plr·cap / cop summed
/// in chiller order. Demand above the total capacity yields every chiller at
/// 1.0 with feasible = false. Error{Domain} for no chillers or negative demand.
SequencingPlan plan_sequencing(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                               const PlannerOptions& options = {});

/// Full enumeration; used directly by tests and the transition search.
SequencingPlan plan_exhaustive(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                               double plr_step = kPlrStep);
/// Greedy loading by best incremental COP (once per on/off commitment up to 8
/// chillers), then single and pairwise moves until no move lowers power.
SequencingPlan plan_greedy(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                           double plr_step = kPlrStep);

/// At most two on/off transitions and no plr change above 0.4 (off counts as
/// 0). A missing previous plan is always accepted. Error{Domain} on a length
/// mismatch.
Verdict verify_plan(std::span<const double> plan, const std::optional<std::vector<double>>& previous);

/// A grid plan that verify_plan accepts against `previous`, covers the demand
/// and lies closest (L1 over plr) to `target`; ties go to the lower power.
/// When no admissible plan covers the demand, the one with the most cooling
/// is returned with feasible = false. nullopt for more than 5 chillers.
std::optional<SequencingPlan> plan_transition(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                                              std::span<const double> previous, std::span<const double> target,
                                              double plr_step = kPlrStep);

/// (mean flow · 4.186 · mean ΔT) / mean power over a window of readings.
struct WindowReadings {
  std::vector<double> mass_flow_kg_s;
  std::vector<double> t_in_c;
  std::vector<double> t_out_c;
  std::vector<double> power_kw;
};

/// Mean power at or below this counts as "chiller off".
inline constexpr double kOffPowerKw = 1e-6;

/// nullopt when the chiller was off. Error{Unavailable} when a series is empty.
std::optional<double> cop_from_window(const WindowReadings& w);

void to_json(nlohmann::json& j, const CopEstimate& e);
void to_json(nlohmann::json& j, const SequencingPlan& p);

}  // namespace edgeml::chillseq
