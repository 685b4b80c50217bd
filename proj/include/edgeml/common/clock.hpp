#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>

namespace edgeml {

using TimestampNs = std::int64_t;

constexpr TimestampNs kNsPerSecond = 1'000'000'000;

constexpr TimestampNs seconds_to_ns(double s) { return static_cast<TimestampNs>(s * 1e9); }
constexpr double ns_to_seconds(TimestampNs ns) { return static_cast<double>(ns) / 1e9; }

/// "YYYY-MM-DDTHH:MM:SSZ" for the current wall-clock time.
std::string utc_now_iso();

/// Time source shared by the platform modules. Simulation runs drive a
/// ManualClock so quotas, staleness and cycle timing follow simulated time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampNs now_ns() const = 0;
};

class SteadyClock final : public Clock {
 public:
  TimestampNs now_ns() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

class SystemClock final : public Clock {
 public:
  TimestampNs now_ns() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampNs start = 0) : now_(start) {}

  TimestampNs now_ns() const override { return now_.load(std::memory_order_acquire); }
  void set(TimestampNs t) { now_.store(t, std::memory_order_release); }
  void advance(TimestampNs dt) { now_.fetch_add(dt, std::memory_order_acq_rel); }

 private:
  std::atomic<TimestampNs> now_;
};

}  // namespace edgeml
