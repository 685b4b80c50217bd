#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <thread>

#include <gtest/gtest.h>

#include "edgeml/common/error.hpp"
#include "edgeml/gateway/device_manager.hpp"
#include "edgeml/gateway/sim_adapter.hpp"
#include "edgeml/tsdb/store.hpp"

using namespace edgeml;
using namespace edgeml::gateway;
using namespace std::chrono_literals;

namespace {

class MemoryAdapter final : public ProtocolAdapter {
 public:
  std::string_view protocol() const override { return "mem"; }
  double read(std::string_view dev, std::string_view prop) override {
    std::this_thread::sleep_for(delay);
    std::lock_guard lock(mu);
    return values[std::string(dev) + "/" + std::string(prop)];
  }
  void write(std::string_view dev, std::string_view prop, double v) override {
    in_write = true;
    std::this_thread::sleep_for(delay);
    std::lock_guard lock(mu);
    values[std::string(dev) + "/" + std::string(prop)] = v;
    in_write = false;
  }
  std::chrono::microseconds delay{0};
  std::atomic<bool> in_write{false};
  std::mutex mu;
  std::map<std::string, double> values;
};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

// Sorted by start, every interval ends before the next one starts.
bool serial_history(std::vector<CommandLogEntry> log) {
  std::sort(log.begin(), log.end(), [](const auto& a, const auto& b) { return a.start_ns < b.start_ns; });
  for (std::size_t i = 0; i + 1 < log.size(); ++i)
    if (log[i].end_ns > log[i + 1].start_ns) return false;
  return true;
}

// Largest number of entries starting inside any half-open window of `w` ns.
int max_in_window(std::vector<CommandLogEntry> log, TimestampNs w) {
  std::sort(log.begin(), log.end(), [](const auto& a, const auto& b) { return a.start_ns < b.start_ns; });
  int best = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    int n = 0;
    for (std::size_t j = i; j < log.size() && log[j].start_ns < log[i].start_ns + w; ++j) ++n;
    best = std::max(best, n);
  }
  return best;
}

struct Fixture {
  ManualClock clock{1'000};
  std::shared_ptr<MemoryAdapter> adapter = std::make_shared<MemoryAdapter>();
  DeviceManager dm{clock, AccessQuota{10, 1}};
  Fixture() { dm.add_adapter(adapter); }
  void add(const std::string& id) { dm.register_device({id, "mem", {"plr", "power_kw"}}); }
};

}  // namespace

TEST(DeviceKey, SplitsIdAndProperty) {
  EXPECT_EQ(device_key("c1", "plr"), "device.c1.plr");
  auto parts = split_device_key("device.c1.t_in_c");
  ASSERT_TRUE(parts);
  EXPECT_EQ(parts->first, "c1");
  EXPECT_EQ(parts->second, "t_in_c");
  EXPECT_FALSE(split_device_key("sensor.c1.x"));
  EXPECT_FALSE(split_device_key("device.c1"));
}

TEST(Gateway, RegisterExposesContextKeys) {
  Fixture f;
  f.add("c1");
  auto snap = f.dm.snapshot_context();
  EXPECT_TRUE(snap.count("device.c1.plr"));
  EXPECT_TRUE(snap.count("device.c1.power_kw"));
  EXPECT_EQ(snap.at("device.c1.plr").source_device, "c1");
}

TEST(Gateway, DuplicateRegistrationConflicts) {
  Fixture f;
  f.add("c1");
  EXPECT_EQ(kind_of([&] { f.add("c1"); }), ErrorKind::Conflict);
}

TEST(Gateway, UnknownKeyIsAbsentNotError) {
  Fixture f;
  f.add("c1");
  EXPECT_FALSE(f.dm.get("device.c1.humidity").has_value());
}

TEST(Gateway, UnknownProtocolIsNotFound) {
  Fixture f;
  EXPECT_EQ(kind_of([&] { f.dm.register_device({"x", "zigbee", {"a"}}); }), ErrorKind::NotFound);
}

TEST(Gateway, RemoveThenAccessIsNotFound) {
  Fixture f;
  f.add("c1");
  f.dm.remove_device("c1");
  EXPECT_EQ(kind_of([&] { f.dm.read_property("c1", "plr"); }), ErrorKind::NotFound);
  EXPECT_FALSE(f.dm.get("device.c1.plr"));
  EXPECT_EQ(kind_of([&] { f.dm.remove_device("c1"); }), ErrorKind::NotFound);
}

TEST(Gateway, RemoveWaitsForPendingWrite) {
  SteadyClock clock;
  auto adapter = std::make_shared<MemoryAdapter>();
  adapter->delay = 50ms;
  DeviceManager dm(clock);
  dm.add_adapter(adapter);
  dm.register_device({"c1", "mem", {"plr"}});
  std::thread writer([&] { dm.write_property("c1", "plr", 0.5); });
  while (!adapter->in_write) std::this_thread::yield();
  auto receipt = dm.remove_device("c1");
  writer.join();
  ASSERT_EQ(receipt.command_log.size(), 1u);
  EXPECT_EQ(receipt.command_log[0].kind, AccessKind::Write);
  EXPECT_LE(receipt.command_log[0].end_ns, receipt.removed_at_ns);
  EXPECT_EQ(adapter->values["c1/plr"], 0.5);
}

TEST(Gateway, WriteThenRead) {
  Fixture f;
  f.add("c1");
  f.dm.write_property("c1", "plr", 0.5);
  EXPECT_EQ(f.dm.read_property("c1", "plr").value, 0.5);
  EXPECT_EQ(f.dm.get("device.c1.plr")->value, 0.5);
  EXPECT_EQ(kind_of([&] { f.dm.read_property("c1", "nope"); }), ErrorKind::NotFound);
}

TEST(Gateway, EleventhOpInWindowExceedsQuota) {
  Fixture f;
  f.add("c1");
  for (int i = 0; i < 10; ++i) f.dm.read_property("c1", "plr");
  EXPECT_EQ(kind_of([&] { f.dm.read_property("c1", "plr"); }), ErrorKind::QuotaExceeded);
  EXPECT_EQ(f.dm.command_log("c1").size(), 10u);
  f.clock.advance(kNsPerSecond);
  EXPECT_NO_THROW(f.dm.read_property("c1", "plr"));
}

TEST(Gateway, ConcurrentMixedOpsFormSerialHistory) {
  SteadyClock clock;
  auto adapter = std::make_shared<MemoryAdapter>();
  adapter->delay = 200us;
  DeviceManager dm(clock, AccessQuota{1000, 1});
  dm.add_adapter(adapter);
  dm.register_device({"c1", "mem", {"plr"}});
  std::vector<std::thread> threads;
  for (int t = 0; t < 10; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        if ((t + i) % 2) dm.write_property("c1", "plr", t * 10 + i);
        else dm.read_property("c1", "plr");
      }
    });
  for (auto& t : threads) t.join();
  auto log = dm.command_log("c1");
  ASSERT_EQ(log.size(), 100u);
  EXPECT_TRUE(serial_history(log));
  for (const auto& e : log) EXPECT_LE(e.start_ns, e.end_ns);
}

TEST(Gateway, QuotaHoldsInEverySlidingWindowUnderRetries) {
  ManualClock clock;
  auto adapter = std::make_shared<MemoryAdapter>();
  DeviceManager dm(clock, AccessQuota{10, 1});
  dm.add_adapter(adapter);
  dm.register_device({"c1", "mem", {"plr"}});
  std::atomic<int> done{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 25; ++i) {
        for (;;) {
          try {
            dm.read_property("c1", "plr");
            break;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::QuotaExceeded) throw;
            std::this_thread::yield();
          }
        }
        ++done;
      }
    });
  std::thread ticker([&] {
    while (done < 100) {
      clock.advance(kNsPerSecond / 7);
      std::this_thread::sleep_for(1ms);
    }
  });
  for (auto& t : threads) t.join();
  ticker.join();
  auto log = dm.command_log("c1");
  EXPECT_EQ(log.size(), 100u);
  EXPECT_LE(max_in_window(log, kNsPerSecond), 10);
}

TEST(Gateway, EmptyPlatformSnapshotIsEmpty) {
  Fixture f;
  EXPECT_TRUE(f.dm.snapshot_context().empty());
}

TEST(Gateway, IngestUpdatesContextMonotonically) {
  Fixture f;
  f.add("c1");
  std::vector<TimePoint> pts{{"device.c1.power_kw", 5'000, 12.0}, {"device.c1.power_kw", 4'000, 99.0},
                             {"device.unknown.power_kw", 5'000, 1.0}};
  EXPECT_EQ(f.dm.ingest(pts), 1u);
  EXPECT_EQ(f.dm.get("device.c1.power_kw")->value, 12.0);
  EXPECT_FALSE(f.dm.get("device.unknown.power_kw"));
}

TEST(Gateway, EventsArePerKeyOrdered) {
  Fixture f;
  for (auto id : {"c1", "c2", "c3"}) f.add(id);
  auto events = f.dm.subscribe_events("device.*.power_kw");
  std::vector<TimePoint> updates;
  for (int round = 0; round < 5; ++round)
    for (auto id : {"c1", "c2", "c3"})
      updates.push_back({device_key(id, "power_kw"), 10'000 + round, double(round)});
  f.dm.ingest(std::span(updates).first(3));
  f.dm.ingest(std::span(updates).subspan(3));
  f.dm.write_property("c1", "plr", 0.4);  // not matched
  f.dm.wait_events_dispatched();
  auto got = events->drain();
  ASSERT_EQ(got.size(), updates.size());
  std::map<std::string, std::vector<double>> want, seen;
  for (const auto& u : updates) want[u.series].push_back(u.value);
  for (const auto& e : got) seen[e.key].push_back(e.value);
  EXPECT_EQ(seen, want);
}

TEST(Gateway, InvalidEventPatternIsSyntaxError) {
  Fixture f;
  EXPECT_EQ(kind_of([&] { f.dm.subscribe_events("device.[c"); }), ErrorKind::Syntax);
}

TEST(Gateway, RefreshFromHistory) {
  ManualClock clock(100 * kNsPerSecond);
  tsdb::Store store;
  auto adapter = std::make_shared<MemoryAdapter>();
  DeviceManager dm(clock, {}, &store);
  dm.add_adapter(adapter);
  dm.register_device({"c1", "mem", {"power_kw"}});
  std::vector<TimePoint> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({"device.c1.power_kw", (90 + i) * kNsPerSecond, 10.0 + i});
  store.append_batch(pts);
  EXPECT_EQ(dm.refresh_from_history("device.c1.power_kw", 60 * kNsPerSecond), 5u);
  EXPECT_EQ(dm.get("device.c1.power_kw")->value, 14.0);

  const auto before = dm.get("device.c1.power_kw");
  EXPECT_EQ(dm.refresh_from_history("device.c1.power_kw", kNsPerSecond), 0u);
  EXPECT_EQ(dm.get("device.c1.power_kw")->value, before->value);
  EXPECT_EQ(dm.refresh_from_history("device.never.stored", 60 * kNsPerSecond), 0u);

  DeviceManager detached(clock);
  EXPECT_EQ(kind_of([&] { detached.refresh_from_history("x", 1); }), ErrorKind::Unavailable);
}

TEST(SimAdapterTest, DrivesPlantThroughProxies) {
  plantsim::PlantConfig cfg;
  plantsim::ChillerSpec s;
  s.id = "c1";
  s.rated_capacity_kw = 100;
  s.nominal_cop = 5;
  cfg.chillers = {s};
  cfg.ambient_profile = {{0, 25}};
  plantsim::Plant plant(cfg);
  std::mutex mu;
  ManualClock clock;
  DeviceManager dm(clock);
  dm.add_adapter(std::make_shared<SimAdapter>(plant, mu));
  for (const auto& d : SimAdapter::descriptors(plant)) dm.register_device(d);
  dm.write_property("c1", "plr", 0.75);
  EXPECT_EQ(plant.state(0).plr, 0.75);
  EXPECT_DOUBLE_EQ(dm.read_property("c1", "cooling_kw").value, 75.0);
  EXPECT_EQ(dm.get("device.weather.t_ambient_c")->value, 25.0);
  EXPECT_EQ(kind_of([&] { dm.write_property("c1", "plr", 0.1); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([&] { dm.write_property("c1", "power_kw", 1); }), ErrorKind::Domain);
}
