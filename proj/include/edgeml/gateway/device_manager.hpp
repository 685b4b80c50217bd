#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "edgeml/common/clock.hpp"
#include "edgeml/common/fanout.hpp"
#include "edgeml/common/time_point.hpp"

namespace edgeml::tsdb {
class Store;
}

namespace edgeml::gateway {

/// Context key of one device property: `device.<id>.<property>`.
std::string device_key(std::string_view device_id, std::string_view property);
/// Splits a context key back into (device id, property). Device ids may not
/// contain dots; the property is everything after the second dot.
std::optional<std::pair<std::string, std::string>> split_device_key(std::string_view key);

struct DeviceDescriptor {
  std::string id;
  std::string protocol = "sim";
  std::vector<std::string> properties;
};

struct AccessQuota {
  int max_ops = 10;
  std::int64_t window_s = 1;
};

enum class AccessKind { Read, Write };
std::string_view to_string(AccessKind kind);

struct CommandLogEntry {
  TimestampNs start_ns = 0;
  TimestampNs end_ns = 0;
  AccessKind kind = AccessKind::Read;
  std::string property;
};

struct PropertyReading {
  double value = 0.0;
  TimestampNs timestamp_ns = 0;
};

struct ContextEntry {
  std::string key;
  double value = 0.0;
  TimestampNs timestamp_ns = 0;
  std::string source_device;
};

struct EntryKey {
  const std::string& operator()(const ContextEntry& e) const { return e.key; }
};

using EventStream = Stream<ContextEntry>;

struct DeviceInfo {
  DeviceDescriptor descriptor;
  std::map<std::string, PropertyReading> properties;
  std::size_t command_count = 0;
};

struct RemovalReceipt {
  TimestampNs removed_at_ns = 0;
  std::vector<CommandLogEntry> command_log;
};

/// Speaks one device protocol. Calls for a given device are already
/// serialized by the DeviceManager.
class ProtocolAdapter {
 public:
  virtual ~ProtocolAdapter() = default;
  virtual std::string_view protocol() const = 0;
  /// Error{NotFound} for properties the device does not have.
  virtual double read(std::string_view device_id, std::string_view property) = 0;
  virtual void write(std::string_view device_id, std::string_view property, double value) = 0;
};

/// Device proxies, serialized access with per-device quotas, and the live
/// context (latest value per key) with ordered change events.
class DeviceManager {
 public:
  DeviceManager(const Clock& clock, AccessQuota default_quota = {}, tsdb::Store* history = nullptr);
  ~DeviceManager();

  DeviceManager(const DeviceManager&) = delete;
  DeviceManager& operator=(const DeviceManager&) = delete;

  void add_adapter(std::shared_ptr<ProtocolAdapter> adapter);

  /// Error{Conflict} for a duplicate id, Error{NotFound} for an unknown
  /// protocol. Each property is polled once so its key appears in the context.
  DeviceInfo register_device(const DeviceDescriptor& descriptor, std::optional<AccessQuota> quota = std::nullopt);
  /// Waits for an in-flight command on the device, then removes the proxy and
  /// its context keys. Error{NotFound} for unknown ids.
  RemovalReceipt remove_device(std::string_view device_id);

  /// Serialized, quota-limited access through the protocol adapter.
  /// Error{QuotaExceeded} when the rolling window is full (nothing logged),
  /// Error{NotFound} for an unknown device or property.
  PropertyReading read_property(std::string_view device_id, std::string_view property);
  void write_property(std::string_view device_id, std::string_view property, double value);

  std::vector<DeviceInfo> devices() const;
  std::vector<CommandLogEntry> command_log(std::string_view device_id) const;

  /// Feeds sensor readings into the context. Points whose key does not
  /// belong to a registered device property are ignored; older timestamps
  /// never overwrite newer ones.
  std::size_t ingest(std::span<const TimePoint> points);

  /// nullopt when the key is absent.
  std::optional<ContextEntry> get(std::string_view key) const;
  std::map<std::string, ContextEntry> snapshot_context() const;
  /// Error{Syntax} for an invalid glob.
  std::shared_ptr<EventStream> subscribe_events(const std::string& pattern, std::size_t capacity = 0);
  void wait_events_dispatched() { events_.wait_idle(); }

  /// Loads the newest stored value of `key` within [now - window, now] into
  /// the context, replacing whatever it held, and returns how many stored
  /// points the window held.
  /// Error{Unavailable} without a history store.
  std::size_t refresh_from_history(std::string_view key, TimestampNs window_ns);

  const Clock& clock() const { return clock_; }

 private:
  struct Device {
    DeviceDescriptor descriptor;
    AccessQuota quota;
    std::shared_ptr<ProtocolAdapter> adapter;
    std::mutex mu;  // serializes protocol access
    bool removed = false;
    std::vector<CommandLogEntry> log;
    std::map<std::string, PropertyReading, std::less<>> properties;
  };

  std::shared_ptr<Device> find(std::string_view device_id) const;
  template <class Op>
  auto access(std::string_view device_id, std::string_view property, AccessKind kind, Op op);
  // Caller holds context_mu_ exclusively.
  bool update_context_locked(const std::string& key, double value, TimestampNs ts, const std::string& source,
                             std::vector<ContextEntry>& events, bool force = false);

  const Clock& clock_;
  AccessQuota default_quota_;
  tsdb::Store* history_;

  mutable std::shared_mutex registry_mu_;
  std::unordered_map<std::string, std::shared_ptr<ProtocolAdapter>> adapters_;
  std::map<std::string, std::shared_ptr<Device>, std::less<>> devices_;

  mutable std::shared_mutex context_mu_;
  std::map<std::string, ContextEntry, std::less<>> context_;
  Fanout<ContextEntry, EntryKey> events_;
};

}  // namespace edgeml::gateway
