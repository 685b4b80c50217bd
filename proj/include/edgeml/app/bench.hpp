#pragma once

#include <cstddef>
#include <cstdint>

#include <nlohmann/json_fwd.hpp>

namespace edgeml::app {

struct IngestBenchOptions {
  double seconds = 10.0;
  /// Offered load, points per second, spread over `series` series.
  double rate = 20000.0;
  std::size_t series = 16;
  std::size_t batch = 200;
};

struct IngestBenchReport {
  std::uint64_t appended = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  /// Producer wall time.
  double elapsed_s = 0.0;
  /// appended / elapsed_s.
  double points_per_s = 0.0;
  /// Time from the last append until the subscriber had everything.
  double drain_s = 0.0;
  /// Every series arrived at the subscriber in append order.
  bool ordered = true;
};

/// Appends synthetic points to an in-memory store at a paced rate while one
/// "*" subscriber consumes them.
IngestBenchReport ingest_benchmark(const IngestBenchOptions& options = {});

struct CycleBenchOptions {
  std::size_t cycles = 1000;
  double age_years = 4.0;
  /// Commissioning used to train the ML model the cycles run with.
  double commissioning_days = 1.0;
};

struct CycleBenchReport {
  std::size_t cycles = 0;
  std::size_t ml_cycles = 0;
  double mean_s = 0.0;
  double p50_s = 0.0;
  double p99_s = 0.0;
  double max_s = 0.0;
};

/// Runs the closed loop on the benchmark plant for `cycles` cycles and
/// reports the wall time of each run_cycle.
CycleBenchReport cycle_benchmark(const CycleBenchOptions& options = {});

void to_json(nlohmann::json& j, const IngestBenchReport& r);
void to_json(nlohmann::json& j, const CycleBenchReport& r);

}  // namespace edgeml::app
