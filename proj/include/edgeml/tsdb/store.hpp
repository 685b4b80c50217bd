#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgeml/common/clock.hpp"
#include "edgeml/common/fanout.hpp"
#include "edgeml/common/time_point.hpp"

namespace edgeml::tsdb {

enum class Aggregate { Mean, Min, Max, Last };

/// Parses "mean" | "min" | "max" | "last"; anything else is Error{Domain}.
Aggregate parse_aggregate(std::string_view name);

using PointStream = Stream<TimePoint>;

struct StoreOptions {
  /// Empty keeps everything in memory only.
  std::filesystem::path data_dir;
  TimestampNs retention_ns = 30LL * 86400 * kNsPerSecond;
  std::size_t subscriber_capacity = 1 << 16;
};

/// Embedded time-series store. Each series keeps an in-memory run of points
/// in append order and is sorted lazily on read, so out-of-order batches are
/// accepted. flush() appends unflushed points to `<data_dir>/<series>.log` as
/// little-endian (int64 timestamp_ns, float64 value) records.
///
/// Safe for concurrent appenders and readers.
class Store {
 public:
  explicit Store(StoreOptions options = {});
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Appends every finite point; returns how many were accepted.
  std::size_t append_batch(std::span<const TimePoint> points);

  /// Points with from <= t < to, ascending by timestamp (ties keep append order).
  std::vector<TimePoint> query_range(std::string_view series, TimestampNs from, TimestampNs to) const;
  std::optional<TimePoint> latest(std::string_view series) const;

  /// One point per non-empty window of width window_s aligned on the epoch,
  /// stamped at the window start.
  std::vector<TimePoint> downsample(std::string_view series, std::int64_t window_s, Aggregate agg) const;

  std::shared_ptr<PointStream> subscribe(const std::string& pattern, std::size_t capacity = 0);
  /// Blocks until every appended point has been offered to the subscribers.
  void wait_dispatched() { fanout_.wait_idle(); }

  /// Drops points older than `before` and rewrites their log files.
  std::size_t prune(TimestampNs before);
  /// prune(now - retention).
  std::size_t enforce_retention(TimestampNs now);

  void flush();

  std::vector<std::string> series_names() const;
  std::size_t point_count() const;
  std::size_t point_count(std::string_view series) const;
  const StoreOptions& options() const { return options_; }

  static std::string encode_file_name(std::string_view series);
  static std::string decode_file_name(std::string_view file_stem);

 private:
  struct Sample {
    TimestampNs t;
    double v;
  };
  struct Series {
    mutable std::shared_mutex mu;
    mutable std::vector<Sample> samples;
    mutable bool sorted = true;
    std::vector<Sample> unflushed;  // append order
    void sort_locked() const;
  };

  Series* find(std::string_view series) const;
  Series& get_or_create(const std::string& series);
  void load_from_disk();
  std::filesystem::path file_for(std::string_view series) const;

  StoreOptions options_;
  std::mutex append_mu_;  // one appender at a time keeps store and fan-out order equal
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::unique_ptr<Series>, std::less<>> series_;
  Fanout<TimePoint, SeriesOf> fanout_;
};

}  // namespace edgeml::tsdb
