#include "edgeml/chillseq/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"

namespace edgeml::chillseq {

double manufacturer_cop(const ChillerSpec& spec, double plr, double t_ambient_c) {
  return plantsim::cop_true(spec, plr, t_ambient_c, 0.0);
}

std::string_view to_string(CopSource s) { return s == CopSource::Predicted ? "predicted" : "manufacturer"; }

Verdict verify_cop(double value, std::optional<double> last_accepted) {
  if (!std::isfinite(value) || value < kCopMin || value > kCopMax) {
    std::ostringstream os;
    os << "range: " << value << " outside [" << kCopMin << ", " << kCopMax << "]";
    return Verdict::reject(os.str());
  }
  if (last_accepted && std::abs(value - *last_accepted) > kMaxCopJump) {
    std::ostringstream os;
    os << "jump: " << std::abs(value - *last_accepted) << " > " << kMaxCopJump;
    return Verdict::reject(os.str());
  }
  return Verdict::accept();
}

std::vector<double> plr_grid(const ChillerSpec& spec, double step) {
  if (!(step > 0.0)) fail(ErrorKind::Domain, "plr step must be > 0");
  if (!(spec.min_plr > 0.0 && spec.min_plr <= 1.0)) fail(ErrorKind::Domain, "min_plr must lie in (0, 1]");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double v = spec.min_plr + k * step;
    if (v > 1.0 + kPlanSlack) break;
    grid.push_back(std::min(v, 1.0));
  }
  if (grid.back() < 1.0 - kPlanSlack) grid.push_back(1.0);
  return grid;
}

namespace {

// Option 0 of every chiller is "off".
struct Table {
  std::vector<std::vector<double>> plr, cooling, power;
};

Table build_table(std::span<const ChillerSpec> specs, const CopFn& cop, double step) {
  Table t;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::vector<double> plr{0.0}, cool{0.0}, pow{0.0};
    for (double p : plr_grid(specs[i], step)) {
      const double c = cop(i, p).value;
      if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::Domain, "COP must be finite and > 0");
      const double q = p * specs[i].rated_capacity_kw;
      plr.push_back(p);
      cool.push_back(q);
      pow.push_back(q / c);
    }
    t.plr.push_back(std::move(plr));
    t.cooling.push_back(std::move(cool));
    t.power.push_back(std::move(pow));
  }
  return t;
}

struct Totals {
  double power = 0.0;
  double cooling = 0.0;
};

Totals totals(const Table& t, std::span<const std::size_t> idx) {
  Totals s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    s.power += t.power[i][idx[i]];
    s.cooling += t.cooling[i][idx[i]];
  }
  return s;
}

SequencingPlan make_plan(const Table& t, std::span<const std::size_t> idx, bool feasible) {
  SequencingPlan plan;
  for (std::size_t i = 0; i < idx.size(); ++i) plan.plrs.push_back(t.plr[i][idx[i]]);
  const Totals s = totals(t, idx);
  plan.expected_power_kw = s.power;
  plan.expected_cooling_kw = s.cooling;
  plan.feasible = feasible;
  return plan;
}

void check_inputs(double demand_kw, std::span<const ChillerSpec> specs) {
  if (specs.empty()) fail(ErrorKind::Domain, "no chillers to sequence");
  if (!(demand_kw >= 0.0) || !std::isfinite(demand_kw)) fail(ErrorKind::Domain, "demand must be finite and >= 0");
}

bool covers(double cooling, double demand) { return cooling >= demand - kPlanSlack; }

// Demand above the total capacity: every chiller at full load.
std::optional<SequencingPlan> infeasible_plan(double demand_kw, const Table& t) {
  std::vector<std::size_t> full(t.plr.size());
  for (std::size_t i = 0; i < full.size(); ++i) full[i] = t.plr[i].size() - 1;
  if (covers(totals(t, full).cooling, demand_kw)) return std::nullopt;
  return make_plan(t, full, false);
}

}  // namespace

SequencingPlan plan_exhaustive(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                               double plr_step) {
  check_inputs(demand_kw, specs);
  const Table t = build_table(specs, cop, plr_step);
  if (auto p = infeasible_plan(demand_kw, t)) return *p;

  const std::size_t n = specs.size();
  std::vector<std::size_t> idx(n, 0), best;
  double best_power = 0.0;
  while (true) {
    const Totals s = totals(t, idx);
    if (covers(s.cooling, demand_kw) && (best.empty() || s.power < best_power)) {
      best = idx;
      best_power = s.power;
    }
    std::size_t i = 0;
    while (i < n && ++idx[i] == t.plr[i].size()) idx[i++] = 0;
    if (i == n) break;
  }
  return make_plan(t, best, true);
}

namespace {

// Loads the chillers in `on` (starting at min_plr) by best incremental COP
// until the demand is covered. Empty when the subset cannot cover it.
std::vector<std::size_t> greedy_load(const Table& t, double demand_kw, const std::vector<bool>& on) {
  const std::size_t n = t.plr.size();
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (on[i]) idx[i] = 1;
  while (!covers(totals(t, idx).cooling, demand_kw)) {
    std::size_t pick = n;
    double best_score = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!on[i] || idx[i] + 1 >= t.plr[i].size()) continue;
      const double dq = t.cooling[i][idx[i] + 1] - t.cooling[i][idx[i]];
      const double dp = t.power[i][idx[i] + 1] - t.power[i][idx[i]];
      const double score = dp > 0.0 ? dq / dp : std::numeric_limits<double>::infinity();
      if (score > best_score) {
        best_score = score;
        pick = i;
      }
    }
    if (pick == n) return {};
    ++idx[pick];
  }
  return idx;
}

// Single-chiller and pairwise moves until none lowers power.
void local_search(const Table& t, double demand_kw, std::vector<std::size_t>& idx) {
  const std::size_t n = idx.size();
  double best_power = totals(t, idx).power;
  for (int pass = 0; pass < 1000; ++pass) {
    std::vector<std::size_t> cand = idx, move;
    double move_power = best_power;
    auto consider = [&] {
      const Totals s = totals(t, cand);
      if (covers(s.cooling, demand_kw) && s.power < move_power) {
        move_power = s.power;
        move = cand;
      }
    };
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < t.plr[i].size(); ++a) {
        cand[i] = a;
        consider();
        for (std::size_t j = i + 1; j < n; ++j) {
          for (std::size_t b = 0; b < t.plr[j].size(); ++b) {
            cand[j] = b;
            consider();
          }
          cand[j] = idx[j];
        }
      }
      cand[i] = idx[i];
    }
    if (move.empty()) break;
    idx = std::move(move);
    best_power = move_power;
  }
}

// Up to this many chillers every on/off commitment gets its own greedy pass.
constexpr std::size_t kCommitmentLimit = 8;

}  // namespace

SequencingPlan plan_greedy(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop, double plr_step) {
  check_inputs(demand_kw, specs);
  const Table t = build_table(specs, cop, plr_step);
  if (auto p = infeasible_plan(demand_kw, t)) return *p;

  const std::size_t n = specs.size();
  if (covers(0.0, demand_kw)) return make_plan(t, std::vector<std::size_t>(n, 0), true);
  std::vector<std::size_t> best;
  double best_power = std::numeric_limits<double>::infinity();
  auto keep = [&](std::vector<std::size_t> idx) {
    if (idx.empty()) return;
    local_search(t, demand_kw, idx);
    const double p = totals(t, idx).power;
    if (p < best_power) {
      best_power = p;
      best = std::move(idx);
    }
  };
  if (n <= kCommitmentLimit) {
    std::vector<bool> on(n);
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      for (std::size_t i = 0; i < n; ++i) on[i] = (mask >> i) & 1u;
      keep(greedy_load(t, demand_kw, on));
    }
  } else {
    keep(greedy_load(t, demand_kw, std::vector<bool>(n, true)));
  }
  return make_plan(t, best, true);
}

SequencingPlan plan_sequencing(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                               const PlannerOptions& options) {
  if (specs.size() <= options.exhaustive_limit) return plan_exhaustive(demand_kw, specs, cop, options.plr_step);
  return plan_greedy(demand_kw, specs, cop, options.plr_step);
}

Verdict verify_plan(std::span<const double> plan, const std::optional<std::vector<double>>& previous) {
  if (!previous) return Verdict::accept();
  if (previous->size() != plan.size())
    fail(ErrorKind::Domain, "plan has " + std::to_string(plan.size()) + " chillers, previous plan " +
                                std::to_string(previous->size()));
  int transitions = 0;
  double max_change = 0.0;
  std::size_t worst = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if ((plan[i] > 0.0) != ((*previous)[i] > 0.0)) ++transitions;
    const double d = std::abs(plan[i] - (*previous)[i]);
    if (d > max_change) {
      max_change = d;
      worst = i;
    }
  }
  if (transitions > kMaxTransitions)
    return Verdict::reject("transitions: " + std::to_string(transitions) + " > " + std::to_string(kMaxTransitions));
  if (max_change > kMaxPlrChange + kPlanSlack) {
    std::ostringstream os;
    os << "plr change: chiller " << worst << " moves " << max_change << " > " << kMaxPlrChange;
    return Verdict::reject(os.str());
  }
  return Verdict::accept();
}

std::optional<SequencingPlan> plan_transition(double demand_kw, std::span<const ChillerSpec> specs, const CopFn& cop,
                                              std::span<const double> previous, std::span<const double> target,
                                              double plr_step) {
  check_inputs(demand_kw, specs);
  if (previous.size() != specs.size() || target.size() != specs.size())
    fail(ErrorKind::Domain, "plan length mismatch");
  if (specs.size() > 5) return std::nullopt;
  const Table t = build_table(specs, cop, plr_step);
  const std::size_t n = specs.size();

  // Options reachable from the previous plr of each chiller.
  std::vector<std::vector<std::size_t>> reach(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < t.plr[i].size(); ++a)
      if (std::abs(t.plr[i][a] - previous[i]) <= kMaxPlrChange + kPlanSlack) reach[i].push_back(a);

  std::vector<std::size_t> idx(n, 0), best;
  Totals best_s;
  double best_dist = 0.0;
  bool best_covers = false;
  auto visit = [&] {
    const Totals s = totals(t, idx);
    const bool c = covers(s.cooling, demand_kw);
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) dist += std::abs(t.plr[i][idx[i]] - target[i]);
    bool better;
    if (best.empty()) {
      better = true;
    } else if (c != best_covers) {
      better = c;
    } else if (c) {
      better = dist < best_dist - kPlanSlack || (dist <= best_dist + kPlanSlack && s.power < best_s.power);
    } else {
      better = s.cooling > best_s.cooling || (s.cooling == best_s.cooling && s.power < best_s.power);
    }
    if (better) {
      best = idx;
      best_s = s;
      best_dist = dist;
      best_covers = c;
    }
  };
  auto dfs = [&](auto&& self, std::size_t i, int transitions) -> void {
    if (i == n) {
      visit();
      return;
    }
    for (std::size_t a : reach[i]) {
      const int tr = transitions + ((t.plr[i][a] > 0.0) != (previous[i] > 0.0) ? 1 : 0);
      if (tr > kMaxTransitions) continue;
      idx[i] = a;
      self(self, i + 1, tr);
    }
  };
  dfs(dfs, 0, 0);
  if (best.empty()) return std::nullopt;
  return make_plan(t, best, best_covers);
}

namespace {
double mean_of(const std::vector<double>& v, const char* what) {
  if (v.empty()) fail(ErrorKind::Unavailable, std::string("no ") + what + " readings in window");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

std::optional<double> cop_from_window(const WindowReadings& w) {
  const double power = mean_of(w.power_kw, "power");
  const double flow = mean_of(w.mass_flow_kg_s, "mass flow");
  const double dt = mean_of(w.t_in_c, "inlet temperature") - mean_of(w.t_out_c, "outlet temperature");
  if (power <= kOffPowerKw) return std::nullopt;
  return flow * plantsim::kWaterCp * dt / power;
}

void to_json(nlohmann::json& j, const CopEstimate& e) {
  j = {{"chiller_id", e.chiller_id}, {"plr", e.plr}, {"value", e.value}, {"source", to_string(e.source)}};
  j["model_version"] = e.model_version ? nlohmann::json(*e.model_version) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const SequencingPlan& p) {
  j = {{"plrs", p.plrs},
       {"expected_power_kw", p.expected_power_kw},
       {"expected_cooling_kw", p.expected_cooling_kw},
       {"feasible", p.feasible}};
}

}  // namespace edgeml::chillseq
