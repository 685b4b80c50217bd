#include "edgeml/app/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeml/chillseq/closed_loop.hpp"
#include "edgeml/common/error.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::app {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Nearest-rank percentile of an unsorted sample.
double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

IngestBenchReport ingest_benchmark(const IngestBenchOptions& o) {
  if (!(o.seconds > 0.0) || !(o.rate > 0.0) || o.series == 0 || o.batch == 0)
    fail(ErrorKind::Domain, "ingest benchmark options must be positive");
  tsdb::Store store;
  auto stream = store.subscribe("*");

  std::vector<std::string> names;
  for (std::size_t s = 0; s < o.series; ++s) names.push_back("bench.s" + std::to_string(s) + ".value");

  IngestBenchReport r;
  std::atomic<bool> producing{true};
  std::thread consumer([&] {
    std::map<std::string, TimestampNs> last;
    for (;;) {
      std::optional<TimePoint> p;
      try {
        p = stream->pop(std::chrono::milliseconds(50));
      } catch (const Error&) {
        r.ordered = false;  // lagging: points were dropped
        return;
      }
      if (!p) {
        if (!producing.load() && r.delivered >= r.appended) return;
        continue;
      }
      ++r.delivered;
      auto [it, fresh] = last.try_emplace(p->series, p->timestamp_ns);
      if (!fresh) {
        if (p->timestamp_ns <= it->second) r.ordered = false;
        it->second = p->timestamp_ns;
      }
    }
  });

  const auto start = Clock::now();
  std::vector<TimePoint> batch(o.batch);
  std::uint64_t seq = 0;
  std::uint64_t appended = 0;
  while (seconds_since(start) < o.seconds) {
    for (auto& p : batch) {
      p.series = names[seq % names.size()];
      p.timestamp_ns = static_cast<TimestampNs>(seq + 1) * 1000;
      p.value = static_cast<double>(seq % 997);
      ++seq;
    }
    appended += store.append_batch(batch);
    const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                 std::chrono::duration<double>(static_cast<double>(appended) / o.rate));
    std::this_thread::sleep_until(due);
  }
  r.elapsed_s = seconds_since(start);
  const auto produced = Clock::now();
  store.wait_dispatched();
  r.appended = appended;
  producing.store(false);
  consumer.join();
  r.drain_s = seconds_since(produced);
  r.dropped = stream->dropped();
  r.points_per_s = static_cast<double>(r.appended) / r.elapsed_s;
  return r;
}

CycleBenchReport cycle_benchmark(const CycleBenchOptions& o) {
  if (o.cycles == 0) fail(ErrorKind::Domain, "cycles must be > 0");
  const plantsim::PlantConfig plant = chillseq::benchmark_plant(o.age_years);
  chillseq::LoopOptions lo;
  lo.controller.age_years = plant.age_years;
  chillseq::ClosedLoop loop(plant, lo);
  if (o.commissioning_days > 0.0) {
    const auto data = chillseq::commissioning_dataset(plant, o.commissioning_days, lo, 7);
    const auto model = chillseq::train_cop_model(data, chillseq::BenchmarkOptions{}.boost, lo.controller.model_name);
    loop.ml().deploy(model);
    loop.ml().activate(model.metadata.name, model.metadata.version);
  }
  const std::int64_t period = lo.controller.period_s;
  const auto cycles = static_cast<std::int64_t>(o.cycles);
  const double days = static_cast<double>(cycles * period) / 86400.0 + 1.0;
  loop.run_until(cycles * period, chillseq::plant_trace(plant, days, period));

  CycleBenchReport r;
  std::vector<double> walls;
  for (const auto& rec : loop.controller().last_cycles(loop.controller().cycle_count())) {
    walls.push_back(rec.wall_s);
    if (rec.plan_source == "ml") ++r.ml_cycles;
  }
  r.cycles = walls.size();
  for (double w : walls) r.mean_s += w;
  if (!walls.empty()) r.mean_s /= static_cast<double>(walls.size());
  r.p50_s = percentile(walls, 0.50);
  r.p99_s = percentile(walls, 0.99);
  r.max_s = walls.empty() ? 0.0 : *std::max_element(walls.begin(), walls.end());
  return r;
}

void to_json(nlohmann::json& j, const IngestBenchReport& r) {
  j = {{"appended", r.appended},   {"delivered", r.delivered}, {"dropped", r.dropped},
       {"elapsed_s", r.elapsed_s}, {"points_per_s", r.points_per_s}, {"drain_s", r.drain_s},
       {"ordered", r.ordered}};
}

void to_json(nlohmann::json& j, const CycleBenchReport& r) {
  j = {{"cycles", r.cycles}, {"ml_cycles", r.ml_cycles}, {"mean_s", r.mean_s},
       {"p50_s", r.p50_s},   {"p99_s", r.p99_s},         {"max_s", r.max_s}};
}

}  // namespace edgeml::app
