#include "edgeml/chillseq/controller.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/gateway/device_manager.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::chillseq {

std::vector<std::string> cop_feature_names() { return {kFeaturePlr, kFeatureAmbient, kFeatureAge, kFeatureModelCode}; }

Predictor ml_predictor(mlrt::MlManager& ml, std::string model, std::vector<std::string> ensemble) {
  return [&ml, model = std::move(model), ensemble = std::move(ensemble)](const FeatureMap& f) {
    if (ensemble.empty()) return ml.predict(model, f);
    auto e = ml.predict_ensemble(ensemble, f);
    for (const auto& m : e.members)
      if (m.value == e.value) return m;
    return mlrt::Prediction{e.value, e.members.front().version, e.members.front().model_name};
  };
}

std::string_view to_string(ModelTarget t) { return t == ModelTarget::Cop ? "cop" : "datasheet_ratio"; }

ModelTarget parse_model_target(std::string_view name) {
  if (name == "cop") return ModelTarget::Cop;
  if (name == "datasheet_ratio") return ModelTarget::DatasheetRatio;
  fail(ErrorKind::Domain, "unknown model target '" + std::string(name) + "'");
}

CopEstimator::CopEstimator(std::vector<ChillerSpec> specs, double age_years, Predictor predictor, ModelTarget target)
    : specs_(std::move(specs)),
      age_years_(age_years),
      predictor_(std::move(predictor)),
      target_(target),
      last_(specs_.size()) {}

double CopEstimator::to_model_label(std::size_t chiller, double plr, double t_ambient_c, double cop) const {
  if (target_ == ModelTarget::Cop) return cop;
  return cop / manufacturer_cop(specs_.at(chiller), plr, t_ambient_c);
}

FeatureMap CopEstimator::features(std::size_t chiller, double plr, double t_ambient_c) const {
  return {{kFeaturePlr, plr},
          {kFeatureAmbient, t_ambient_c},
          {kFeatureAge, age_years_},
          {kFeatureModelCode, static_cast<double>(specs_.at(chiller).model_code)}};
}

CopEstimate CopEstimator::manufacturer(std::size_t chiller, double plr, double t_ambient_c) const {
  const ChillerSpec& spec = specs_.at(chiller);
  return {spec.id, plr, manufacturer_cop(spec, plr, t_ambient_c), CopSource::Manufacturer, std::nullopt};
}

CopEstimate CopEstimator::estimate(std::size_t chiller, double plr, double t_ambient_c) const {
  if (predictor_) {
    try {
      const mlrt::Prediction p = predictor_(features(chiller, plr, t_ambient_c));
      const double value =
          target_ == ModelTarget::Cop ? p.value : p.value * manufacturer_cop(specs_.at(chiller), plr, t_ambient_c);
      if (verify_cop(value, last_.at(chiller)))
        return {specs_.at(chiller).id, plr, value, CopSource::Predicted, p.version};
    } catch (const Error&) {
      // no usable prediction: fall through to the datasheet value
    }
  }
  return manufacturer(chiller, plr, t_ambient_c);
}

std::string_view to_string(Strategy s) { return s == Strategy::Ml ? "ml" : "manufacturer"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "ml") return Strategy::Ml;
  if (name == "manufacturer") return Strategy::Manufacturer;
  fail(ErrorKind::Domain, "unknown strategy '" + std::string(name) + "'");
}

bool CycleRecord::has_flag(std::string_view f) const {
  return std::any_of(flags.begin(), flags.end(), [&](const std::string& s) { return s.rfind(f, 0) == 0; });
}

void to_json(nlohmann::json& j, const CycleRecord& r) {
  j = {{"cycle_id", r.cycle_id},
       {"demand_kw", r.demand.demand_kw},
       {"issued_at_ns", r.demand.issued_at},
       {"period_s", r.demand.period_s},
       {"plan", r.plan},
       {"plan_source", r.plan_source},
       {"estimates", r.estimates},
       {"t_ambient_c", r.t_ambient_c},
       {"executed_at_ns", r.executed_at},
       {"wall_s", r.wall_s},
       {"flags", r.flags}};
  if (r.pending)
    j["actual_cop"] = "pending";
  else
    j["actual_cop"] = r.actual_cop;
}

namespace {

// Memoized COP table for one cycle.
class CopTable {
 public:
  using Source = std::function<CopEstimate(std::size_t, double)>;
  explicit CopTable(Source src) : src_(std::move(src)) {}

  const CopEstimate& get(std::size_t i, double plr) {
    auto key = std::make_pair(i, plr);
    auto it = memo_.find(key);
    if (it == memo_.end()) it = memo_.emplace(key, src_(i, plr)).first;
    return it->second;
  }
  CopFn fn() {
    return [this](std::size_t i, double plr) { return get(i, plr); };
  }

 private:
  Source src_;
  std::map<std::pair<std::size_t, double>, CopEstimate> memo_;
};

SequencingPlan plan_from(std::span<const ChillerSpec> specs, std::vector<double> plrs, double demand,
                         CopTable& table) {
  SequencingPlan p;
  for (std::size_t i = 0; i < plrs.size(); ++i) {
    if (plrs[i] <= 0.0) continue;
    const double q = plrs[i] * specs[i].rated_capacity_kw;
    p.expected_cooling_kw += q;
    p.expected_power_kw += q / table.get(i, plrs[i]).value;
  }
  p.feasible = p.expected_cooling_kw >= demand - kPlanSlack;
  p.plrs = std::move(plrs);
  return p;
}

}  // namespace

SequencingController::SequencingController(std::vector<ChillerSpec> specs, gateway::DeviceManager& devices,
                                           tsdb::Store& history, const Clock& clock, mlrt::MlManager* ml,
                                           ControllerOptions options, Predictor predictor)
    : specs_(std::move(specs)),
      devices_(devices),
      history_(history),
      clock_(clock),
      ml_(ml),
      options_(std::move(options)),
      estimator_(specs_, options_.age_years, {}, options_.target),
      ml_labels_(ml != nullptr) {
  if (specs_.empty()) fail(ErrorKind::Domain, "no chillers to sequence");
  if (options_.period_s <= 0 || options_.stability_delay_s <= 0)
    fail(ErrorKind::Domain, "period_s and stability_delay_s must be > 0");
  if (options_.stability_delay_s >= options_.period_s)
    fail(ErrorKind::Domain, "stability_delay_s must be shorter than period_s");
  if (options_.strategy == Strategy::Ml) {
    if (predictor)
      estimator_.set_predictor(std::move(predictor));
    else if (ml_)
      estimator_.set_predictor(ml_predictor(*ml_, options_.model_name, options_.ensemble));
  }
}

double SequencingController::read_ambient() const {
  if (auto e = devices_.get(options_.ambient_key)) return e->value;
  if (auto p = history_.latest(options_.ambient_key)) return p->value;
  fail(ErrorKind::Unavailable, "no reading for '" + options_.ambient_key + "'");
}

CycleRecord SequencingController::run_cycle(const CoolingDemand& demand) {
  std::lock_guard lock(cycle_mu_);
  const auto wall_start = std::chrono::steady_clock::now();
  CycleRecord rec;
  rec.cycle_id = next_cycle_++;
  rec.demand = demand;
  rec.executed_at = clock_.now_ns();

  try {
    if (!(demand.demand_kw >= 0.0) || !std::isfinite(demand.demand_kw))
      fail(ErrorKind::Domain, "demand must be finite and >= 0");
    const double t_amb = read_ambient();
    rec.t_ambient_c = t_amb;

    CopTable primary([&](std::size_t i, double plr) { return estimator_.estimate(i, plr, t_amb); });
    CopTable datasheet([&](std::size_t i, double plr) { return estimator_.manufacturer(i, plr, t_amb); });
    CopTable* used = &primary;

    SequencingPlan plan = plan_sequencing(demand.demand_kw, specs_, primary.fn(), options_.planner);
    const std::vector<double> target = plan.plrs;
    Verdict v = verify_plan(plan.plrs, previous_);
    rec.plan_source = std::string(to_string(options_.strategy));
    if (!v) rec.flags.push_back("plan_rejected: " + v.reason);
    auto try_transition = [&]() -> bool {
      auto t = plan_transition(demand.demand_kw, specs_, primary.fn(), *previous_, target, options_.planner.plr_step);
      if (!t) return false;
      plan = std::move(*t);
      used = &primary;
      rec.plan_source = "transition";
      return true;
    };
    bool done = static_cast<bool>(v);
    if (!done && options_.strategy == Strategy::Ml) {
      plan = plan_sequencing(demand.demand_kw, specs_, datasheet.fn(), options_.planner);
      v = verify_plan(plan.plrs, previous_);
      used = &datasheet;
      rec.plan_source = "manufacturer";
      if (!v) rec.flags.push_back("manufacturer_plan_rejected: " + v.reason);
      done = static_cast<bool>(v);
    }
    if (!done && !try_transition()) {
      plan = plan_from(specs_, *previous_, demand.demand_kw, primary);
      used = &primary;
      rec.plan_source = "previous";
    }
    if (!plan.feasible) rec.flags.push_back("infeasible");
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (plan.plrs[i] > 0.0) rec.estimates.push_back(used->get(i, plan.plrs[i]));
    rec.plan = std::move(plan);
  } catch (const Error& e) {
    rec.flags.push_back(std::string("error: ") + e.what());
    rec.estimates.clear();
    rec.plan = SequencingPlan{};
    if (previous_) rec.plan.plrs = *previous_;
    rec.plan_source = "previous";
  }
  return commit(std::move(rec), wall_start);
}

CycleRecord SequencingController::execute_plan(const CoolingDemand& demand, std::vector<double> plrs) {
  std::lock_guard lock(cycle_mu_);
  const auto wall_start = std::chrono::steady_clock::now();
  if (plrs.size() != specs_.size()) fail(ErrorKind::Domain, "plan length does not match the chiller count");
  for (std::size_t i = 0; i < plrs.size(); ++i)
    if (!plantsim::plr_admissible(specs_[i], plrs[i]))
      fail(ErrorKind::Domain, "plr " + std::to_string(plrs[i]) + " not admissible for " + specs_[i].id);
  CycleRecord rec;
  rec.cycle_id = next_cycle_++;
  rec.demand = demand;
  rec.executed_at = clock_.now_ns();
  rec.plan_source = "manual";
  try {
    rec.t_ambient_c = read_ambient();
    CopTable datasheet([&](std::size_t i, double plr) { return estimator_.manufacturer(i, plr, rec.t_ambient_c); });
    rec.plan = plan_from(specs_, std::move(plrs), demand.demand_kw, datasheet);
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (rec.plan.plrs[i] > 0.0) rec.estimates.push_back(datasheet.get(i, rec.plan.plrs[i]));
  } catch (const Error& e) {
    rec.flags.push_back(std::string("error: ") + e.what());
    rec.plan.plrs = std::move(plrs);
  }
  return commit(std::move(rec), wall_start);
}

CycleRecord SequencingController::commit(CycleRecord rec, std::chrono::steady_clock::time_point wall_start) {
  const bool changes_plant = !rec.plan.plrs.empty() && (!previous_ || rec.plan.plrs != *previous_);
  if (rec.plan.plrs.empty()) {
    rec.pending = false;
  } else if (changes_plant) {
    try {
      for (std::size_t i = 0; i < specs_.size(); ++i) devices_.write_property(specs_[i].id, "plr", rec.plan.plrs[i]);
      previous_ = rec.plan.plrs;
    } catch (const Error& e) {
      rec.flags.push_back(std::string("write_failed: ") + e.what());
      if (previous_) {
        try {
          for (std::size_t i = 0; i < specs_.size(); ++i) devices_.write_property(specs_[i].id, "plr", (*previous_)[i]);
        } catch (const Error&) {
          rec.flags.push_back("restore_failed");
        }
        rec.plan = SequencingPlan{};
        rec.plan.plrs = *previous_;
      }
      rec.plan_source = "previous";
      rec.estimates.clear();
    }
  }

  for (std::size_t i = 0, k = 0; i < specs_.size() && k < rec.estimates.size(); ++i)
    if (!rec.plan.plrs.empty() && rec.plan.plrs[i] > 0.0) estimator_.set_last_accepted(i, rec.estimates[k++].value);

  if (ml_labels_ && rec.pending && !rec.plan.plrs.empty() && !rec.has_flag("error")) {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (rec.plan.plrs[i] <= 0.0) continue;
      const FeatureMap f = estimator_.features(i, rec.plan.plrs[i], rec.t_ambient_c);
      try {
        ml_->retain({rec.cycle_id, specs_[i].id}, ml_->predict(options_.model_name, f), f);
      } catch (const Error&) {
        // no active model: the label stays in the cycle record only
      }
    }
  }

  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  if (rec.wall_s > static_cast<double>(rec.demand.period_s)) rec.flags.push_back("deadline_missed");

  std::lock_guard lock(records_mu_);
  // The previous cycle's window ends where this one starts.
  for (auto& p : pending_) p.window_to = std::min(p.window_to, rec.executed_at);
  if (rec.pending) {
    const TimestampNs from = rec.executed_at + options_.stability_delay_s * kNsPerSecond;
    const std::int64_t period = rec.demand.period_s > 0 ? rec.demand.period_s : options_.period_s;
    pending_.push_back({rec.cycle_id, from, rec.executed_at + period * kNsPerSecond});
  }
  records_[rec.cycle_id] = rec;
  return rec;
}

void SequencingController::label(CycleRecord& rec, TimestampNs from, TimestampNs to) {
  rec.pending = false;
  if (to <= from) {
    rec.flags.push_back("window_truncated");
    return;
  }
  if (auto amb = history_.query_range(options_.ambient_key, from, to); !amb.empty()) {
    double sum = 0.0;
    for (const auto& p : amb) sum += p.value;
    rec.window_ambient_c = sum / static_cast<double>(amb.size());
  }
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (rec.plan.plrs[i] <= 0.0) continue;
    const std::string& id = specs_[i].id;
    auto values = [&](const char* prop) {
      std::vector<double> v;
      for (const auto& p : history_.query_range(plantsim::series_key(id, prop), from, to)) v.push_back(p.value);
      return v;
    };
    WindowReadings w{values("mass_flow_kg_s"), values("t_in_c"), values("t_out_c"), values("power_kw")};
    try {
      auto cop = cop_from_window(w);
      if (!cop) continue;
      rec.actual_cop[id] = *cop;
      if (ml_labels_) {
        const double y = estimator_.to_model_label(i, rec.plan.plrs[i], rec.window_ambient_c.value_or(rec.t_ambient_c), *cop);
        try {
          ml_->record_label({rec.cycle_id, id}, y);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NotFound) rec.flags.push_back("label_rejected: " + id + ": " + e.what());
        }
      }
    } catch (const Error& e) {
      rec.flags.push_back("label_unavailable: " + id + ": " + e.what());
    }
  }
}

std::size_t SequencingController::complete_due_cycles() {
  const TimestampNs now = clock_.now_ns();
  std::vector<std::pair<Pending, CycleRecord>> due;
  {
    std::lock_guard lock(records_mu_);
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (now >= it->window_to) {
        due.emplace_back(*it, records_.at(it->cycle_id));
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& [p, rec] : due) label(rec, p.window_from, p.window_to);
  std::lock_guard lock(records_mu_);
  for (auto& [p, rec] : due) records_[rec.cycle_id] = std::move(rec);
  return due.size();
}

std::optional<CycleRecord> SequencingController::cycle(std::int64_t id) const {
  std::lock_guard lock(records_mu_);
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<CycleRecord> SequencingController::last_cycles(std::size_t n) const {
  std::lock_guard lock(records_mu_);
  std::vector<CycleRecord> out;
  for (auto it = records_.rbegin(); it != records_.rend() && out.size() < n; ++it) out.push_back(it->second);
  std::reverse(out.begin(), out.end());
  return out;
}

std::size_t SequencingController::cycle_count() const {
  std::lock_guard lock(records_mu_);
  return records_.size();
}

std::optional<std::vector<double>> SequencingController::previous_plan() const {
  std::lock_guard lock(cycle_mu_);
  return previous_;
}

}  // namespace edgeml::chillseq
