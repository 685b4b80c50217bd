#include "edgeml/chillseq/closed_loop.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/gateway/sim_adapter.hpp"

namespace edgeml::chillseq {

ClosedLoop::ClosedLoop(plantsim::PlantConfig plant, LoopOptions options, Predictor predictor)
    : plant_(std::move(plant)), options_(std::move(options)), clock_(plant_.now_ns()), store_(options_.store) {
  const std::int64_t tick = plant_.config().tick_seconds;
  if (options_.controller.period_s % tick != 0 || options_.controller.stability_delay_s % tick != 0)
    fail(ErrorKind::Domain, "period_s and stability_delay_s must be multiples of the plant tick");
  devices_ = std::make_unique<gateway::DeviceManager>(clock_, options_.quota, &store_);
  devices_->add_adapter(std::make_shared<gateway::SimAdapter>(plant_, plant_mu_));
  for (const auto& d : gateway::SimAdapter::descriptors(plant_)) devices_->register_device(d);
  ml_ = std::make_unique<mlrt::MlManager>(clock_, nullptr, options_.ml);
  for (const auto& f : cop_feature_names()) ml_->set_feature_source(f, mlrt::FeatureSource::request());
  controller_ = std::make_unique<SequencingController>(plant_.config().chillers, *devices_, store_, clock_, ml_.get(),
                                                       options_.controller, std::move(predictor));
  next_cycle_s_ = plant_.now_s();
}

ClosedLoop::~ClosedLoop() = default;

void ClosedLoop::run_until(std::int64_t end_s, const plantsim::DemandTrace& trace, const PlanOverride& override_plan) {
  const std::int64_t tick = plant_.config().tick_seconds;
  const std::int64_t period = options_.controller.period_s;
  while (plant_.now_s() < end_s) {
    const std::int64_t t = plant_.now_s();
    clock_.set(plant_.now_ns());
    if (t >= next_cycle_s_) {
      controller_->complete_due_cycles();
      const double demand = trace.points.empty() ? 0.0 : plantsim::demand_at(trace, t);
      const CoolingDemand cd{demand, clock_.now_ns(), period};
      std::optional<std::vector<double>> plan;
      if (override_plan) plan = override_plan(cycles_started_, demand);
      if (plan)
        controller_->execute_plan(cd, std::move(*plan));
      else
        controller_->run_cycle(cd);
      ++cycles_started_;
      next_cycle_s_ += period;
      store_.enforce_retention(clock_.now_ns());
    }
    std::vector<TimePoint> points;
    {
      std::lock_guard lock(plant_mu_);
      points = plant_.step(tick);
    }
    clock_.set(plant_.now_ns());
    store_.append_batch(points);
    devices_->ingest(points);
  }
  clock_.set(plant_.now_ns());
  controller_->complete_due_cycles();
}

boost::Dataset labelled_dataset(const SequencingController& controller) {
  boost::Dataset data;
  data.feature_names = cop_feature_names();
  const auto& specs = controller.estimator().specs();
  for (const auto& rec : controller.last_cycles(controller.cycle_count())) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto it = rec.actual_cop.find(specs[i].id);
      if (it == rec.actual_cop.end()) continue;
      // Label with the conditions the window actually saw.
      const double amb = rec.window_ambient_c.value_or(rec.t_ambient_c);
      const auto& est = controller.estimator();
      const FeatureMap f = est.features(i, rec.plan.plrs[i], amb);
      std::vector<double> row;
      for (const auto& name : data.feature_names) row.push_back(f.at(name));
      data.add_row(row, est.to_model_label(i, rec.plan.plrs[i], amb, it->second));
    }
  }
  return data;
}

boost::Dataset commissioning_dataset(const plantsim::PlantConfig& plant, double days, const LoopOptions& options,
                                     std::uint64_t seed) {
  LoopOptions lo = options;
  lo.controller.strategy = Strategy::Manufacturer;
  lo.controller.age_years = plant.age_years;
  ClosedLoop loop(plant, lo);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> grids;
  for (const auto& c : plant.chillers) grids.push_back(plr_grid(c, lo.controller.planner.plr_step));
  auto sweep = [&](std::int64_t, double) -> std::optional<std::vector<double>> {
    std::vector<double> plrs;
    for (const auto& g : grids) plrs.push_back(g[std::uniform_int_distribution<std::size_t>(0, g.size() - 1)(rng)]);
    return plrs;
  };
  loop.run_until(static_cast<std::int64_t>(days * 86400.0), plantsim::DemandTrace{}, sweep);
  return labelled_dataset(loop.controller());
}

boost::PortableModel train_cop_model(const boost::Dataset& data, const boost::AdaBoostParams& params,
                                     const std::string& name, std::int64_t version, const std::string& dataset_id) {
  boost::PortableModel pm;
  pm.body = boost::fit_adaboost_r2(data, params);
  pm.metadata.name = name;
  pm.metadata.version = version;
  pm.metadata.dataset_id = dataset_id;
  pm.metadata.run_id = "edge-" + std::to_string(version);
  return pm;
}

plantsim::DemandTrace diurnal_trace(double days, double base_kw, double peak_kw, std::int64_t step_s) {
  if (step_s <= 0) fail(ErrorKind::Domain, "trace step must be > 0");
  plantsim::DemandTrace trace;
  const auto end = static_cast<std::int64_t>(days * 86400.0);
  for (std::int64_t t = 0; t < end; t += step_s) {
    const double hour = std::fmod(static_cast<double>(t) / 3600.0, 24.0);
    const double shape = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 4.0) / 24.0));
    trace.points.emplace_back(t, base_kw + (peak_kw - base_kw) * shape);
  }
  return trace;
}

plantsim::DemandTrace plant_trace(const plantsim::PlantConfig& plant, double days, std::int64_t step_s) {
  double capacity = 0.0;
  for (const auto& c : plant.chillers) capacity += c.rated_capacity_kw;
  return diurnal_trace(days, capacity * 150.0 / 1100.0, capacity * 600.0 / 1100.0, step_s);
}

plantsim::PlantConfig benchmark_plant(double age_years, double noise_sigma, double aging_rate, std::uint64_t seed) {
  plantsim::PlantConfig cfg;
  auto older = [&](std::string id) {
    plantsim::ChillerSpec c;
    c.id = std::move(id);
    c.rated_capacity_kw = 300.0;
    c.nominal_cop = 6.0;
    c.curve_a = 1.0;
    c.curve_b = 0.02;
    c.aging_rate = aging_rate;
    c.model_code = 1;
    return c;
  };
  cfg.chillers.push_back(older("A"));
  cfg.chillers.push_back(older("B"));
  plantsim::ChillerSpec c;
  c.id = "C";
  c.rated_capacity_kw = 500.0;
  c.nominal_cop = 5.6;
  c.curve_a = 0.3;  // variable-speed unit: flatter part-load curve
  c.curve_b = 0.02;
  c.aging_rate = 0.0;
  c.model_code = 2;
  cfg.chillers.push_back(c);
  cfg.age_years = age_years;
  cfg.ambient_profile = {{0.0, 22.0}, {6.0, 20.0}, {14.0, 32.0}, {19.0, 27.0}};
  cfg.sensor_noise_sigma = noise_sigma;
  cfg.seed = seed;
  cfg.tick_seconds = 60;
  return cfg;
}

BenchmarkReport benchmark_strategies(const plantsim::PlantConfig& plant, const plantsim::DemandTrace& trace,
                                     const std::vector<Strategy>& strategies, const BenchmarkOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport report;
  std::optional<boost::PortableModel> model = options.model;
  const bool needs_model = std::find(strategies.begin(), strategies.end(), Strategy::Ml) != strategies.end();
  if (needs_model && !model) {
    const boost::Dataset data = commissioning_dataset(plant, options.commissioning_days, options.loop, options.seed);
    report.training_samples = data.size();
    model = train_cop_model(data, options.boost, options.loop.controller.model_name);
  }
  if (model)
    if (const auto* ab = std::get_if<boost::AdaBoostR2Model>(&model->body)) report.model_rounds = ab->rounds();

  for (Strategy s : strategies) {
    LoopOptions lo = options.loop;
    lo.controller.strategy = s;
    lo.controller.age_years = plant.age_years;
    ClosedLoop loop(plant, lo);
    if (s == Strategy::Ml) {
      loop.ml().deploy(*model);
      loop.ml().activate(model->metadata.name, model->metadata.version);
    }
    loop.run_until(static_cast<std::int64_t>(options.eval_days * 86400.0), trace);

    StrategyResult r;
    r.total_kwh = loop.plant().true_energy_kwh();
    r.cycles = loop.cycles_started();
    const std::string name(to_string(s));
    for (const auto& rec : loop.controller().last_cycles(loop.controller().cycle_count())) {
      if (rec.plan_source != name) ++r.fallback_cycles;
      if (options.keep_cycle_log)
        r.log.push_back({rec.cycle_id, rec.demand.demand_kw, rec.plan.plrs, rec.plan_source,
                         rec.plan.expected_power_kw});
    }
    report.strategies[name] = std::move(r);
  }
  auto ml = report.strategies.find("ml");
  auto man = report.strategies.find("manufacturer");
  if (ml != report.strategies.end() && man != report.strategies.end() && man->second.total_kwh > 0.0)
    ml->second.savings_pct = 100.0 * (man->second.total_kwh - ml->second.total_kwh) / man->second.total_kwh;
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void to_json(nlohmann::json& j, const CycleSummary& c) {
  j = {{"cycle_id", c.cycle_id},
       {"demand_kw", c.demand_kw},
       {"plrs", c.plrs},
       {"plan_source", c.plan_source},
       {"expected_power_kw", c.expected_power_kw}};
}

void to_json(nlohmann::json& j, const StrategyResult& r) {
  j = {{"total_kwh", r.total_kwh},
       {"cycles", r.cycles},
       {"savings_pct", r.savings_pct},
       {"fallback_cycles", r.fallback_cycles}};
  if (!r.log.empty()) j["log"] = r.log;
}

void to_json(nlohmann::json& j, const BenchmarkReport& r) {
  j = nlohmann::json::object();
  for (const auto& [name, res] : r.strategies) j[name] = res;
  j["_meta"] = {{"training_samples", r.training_samples}, {"model_rounds", r.model_rounds}, {"runtime_s", r.runtime_s}};
}

}  // namespace edgeml::chillseq
