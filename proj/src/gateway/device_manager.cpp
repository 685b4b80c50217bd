#include "edgeml/gateway/device_manager.hpp"

#include <algorithm>

#include "edgeml/common/error.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::gateway {

std::string device_key(std::string_view device_id, std::string_view property) {
  std::string key = "device.";
  key.append(device_id).append(".").append(property);
  return key;
}

std::optional<std::pair<std::string, std::string>> split_device_key(std::string_view key) {
  constexpr std::string_view prefix = "device.";
  if (key.substr(0, prefix.size()) != prefix) return std::nullopt;
  key.remove_prefix(prefix.size());
  auto dot = key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == key.size()) return std::nullopt;
  return std::make_pair(std::string(key.substr(0, dot)), std::string(key.substr(dot + 1)));
}

std::string_view to_string(AccessKind kind) { return kind == AccessKind::Read ? "read" : "write"; }

DeviceManager::DeviceManager(const Clock& clock, AccessQuota default_quota, tsdb::Store* history)
    : clock_(clock), default_quota_(default_quota), history_(history) {
  if (default_quota_.max_ops <= 0 || default_quota_.window_s <= 0)
    fail(ErrorKind::Domain, "quota needs max_ops > 0 and window_s > 0");
}

DeviceManager::~DeviceManager() = default;

void DeviceManager::add_adapter(std::shared_ptr<ProtocolAdapter> adapter) {
  std::unique_lock lock(registry_mu_);
  adapters_[std::string(adapter->protocol())] = std::move(adapter);
}

std::shared_ptr<DeviceManager::Device> DeviceManager::find(std::string_view device_id) const {
  std::shared_lock lock(registry_mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) fail(ErrorKind::NotFound, "unknown device '" + std::string(device_id) + "'");
  return it->second;
}

DeviceInfo DeviceManager::register_device(const DeviceDescriptor& descriptor, std::optional<AccessQuota> quota) {
  if (descriptor.id.empty() || descriptor.id.find('.') != std::string::npos)
    fail(ErrorKind::Domain, "device id must be non-empty and contain no '.'");
  const AccessQuota q = quota.value_or(default_quota_);
  if (q.max_ops <= 0 || q.window_s <= 0) fail(ErrorKind::Domain, "quota needs max_ops > 0 and window_s > 0");

  auto dev = std::make_shared<Device>();
  dev->descriptor = descriptor;
  dev->quota = q;
  {
    std::shared_lock lock(registry_mu_);
    if (devices_.count(descriptor.id)) fail(ErrorKind::Conflict, "device '" + descriptor.id + "' already registered");
    auto it = adapters_.find(descriptor.protocol);
    if (it == adapters_.end()) fail(ErrorKind::NotFound, "no adapter for protocol '" + descriptor.protocol + "'");
    dev->adapter = it->second;
  }

  // Discovery poll: outside the command log and quota.
  const TimestampNs now = clock_.now_ns();
  for (const auto& p : descriptor.properties) dev->properties[p] = {dev->adapter->read(descriptor.id, p), now};

  {
    std::unique_lock lock(registry_mu_);
    if (!devices_.emplace(descriptor.id, dev).second)
      fail(ErrorKind::Conflict, "device '" + descriptor.id + "' already registered");
  }
  std::vector<ContextEntry> events;
  {
    std::unique_lock lock(context_mu_);
    for (const auto& [p, r] : dev->properties)
      update_context_locked(device_key(descriptor.id, p), r.value, r.timestamp_ns, descriptor.id, events);
    events_.publish(std::move(events));
  }
  DeviceInfo info;
  info.descriptor = descriptor;
  info.properties.insert(dev->properties.begin(), dev->properties.end());
  return info;
}

RemovalReceipt DeviceManager::remove_device(std::string_view device_id) {
  std::shared_ptr<Device> dev;
  {
    std::unique_lock lock(registry_mu_);
    auto it = devices_.find(device_id);
    if (it == devices_.end()) fail(ErrorKind::NotFound, "unknown device '" + std::string(device_id) + "'");
    dev = it->second;
    devices_.erase(it);
  }
  RemovalReceipt receipt;
  {
    std::lock_guard lock(dev->mu);  // lets an in-flight command finish
    dev->removed = true;
    receipt.removed_at_ns = clock_.now_ns();
    receipt.command_log = dev->log;
  }
  const std::string prefix = device_key(device_id, "");
  std::unique_lock lock(context_mu_);
  for (auto it = context_.lower_bound(prefix); it != context_.end() && it->first.compare(0, prefix.size(), prefix) == 0;)
    it = context_.erase(it);
  return receipt;
}

template <class Op>
auto DeviceManager::access(std::string_view device_id, std::string_view property, AccessKind kind, Op op) {
  auto dev = find(device_id);
  std::lock_guard lock(dev->mu);
  if (dev->removed) fail(ErrorKind::NotFound, "unknown device '" + std::string(device_id) + "'");
  const auto& props = dev->descriptor.properties;
  if (std::find(props.begin(), props.end(), property) == props.end())
    fail(ErrorKind::NotFound, "device '" + std::string(device_id) + "' has no property '" + std::string(property) + "'");

  const TimestampNs start = clock_.now_ns();
  const TimestampNs window = dev->quota.window_s * kNsPerSecond;
  int in_window = 0;
  for (auto it = dev->log.rbegin(); it != dev->log.rend() && it->start_ns > start - window; ++it) ++in_window;
  if (in_window >= dev->quota.max_ops)
    fail(ErrorKind::QuotaExceeded, "quota of " + std::to_string(dev->quota.max_ops) + " ops per " +
                                       std::to_string(dev->quota.window_s) + " s exhausted for '" +
                                       std::string(device_id) + "'");

  struct Logger {
    Device& d;
    const Clock& clock;
    TimestampNs start;
    AccessKind kind;
    std::string_view property;
    TimestampNs end = 0;
    ~Logger() {
      end = clock.now_ns();
      d.log.push_back({start, std::max(end, start), kind, std::string(property)});
    }
  };
  double value;
  TimestampNs stamp;
  {
    Logger logger{*dev, clock_, start, kind, property};
    value = op(*dev->adapter);
    stamp = clock_.now_ns();
  }
  dev->properties[std::string(property)] = {value, stamp};
  std::vector<ContextEntry> events;
  {
    std::unique_lock ctx(context_mu_);
    update_context_locked(device_key(device_id, property), value, stamp, std::string(device_id), events);
    events_.publish(std::move(events));
  }
  return PropertyReading{value, stamp};
}

PropertyReading DeviceManager::read_property(std::string_view device_id, std::string_view property) {
  return access(device_id, property, AccessKind::Read,
                [&](ProtocolAdapter& a) { return a.read(device_id, property); });
}

void DeviceManager::write_property(std::string_view device_id, std::string_view property, double value) {
  access(device_id, property, AccessKind::Write, [&](ProtocolAdapter& a) {
    a.write(device_id, property, value);
    return value;
  });
}

std::vector<DeviceInfo> DeviceManager::devices() const {
  std::vector<std::shared_ptr<Device>> devs;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, d] : devices_) devs.push_back(d);
  }
  std::vector<DeviceInfo> out;
  for (const auto& d : devs) {
    std::lock_guard lock(d->mu);
    DeviceInfo info;
    info.descriptor = d->descriptor;
    info.properties.insert(d->properties.begin(), d->properties.end());
    info.command_count = d->log.size();
    out.push_back(std::move(info));
  }
  return out;
}

std::vector<CommandLogEntry> DeviceManager::command_log(std::string_view device_id) const {
  auto dev = find(device_id);
  std::lock_guard lock(dev->mu);
  return dev->log;
}

bool DeviceManager::update_context_locked(const std::string& key, double value, TimestampNs ts,
                                          const std::string& source, std::vector<ContextEntry>& events, bool force) {
  auto it = context_.find(key);
  if (it == context_.end()) {
    it = context_.emplace(key, ContextEntry{key, value, ts, source}).first;
  } else {
    if (!force && ts < it->second.timestamp_ns) return false;
    it->second.value = value;
    it->second.timestamp_ns = ts;
  }
  events.push_back(it->second);
  return true;
}

std::size_t DeviceManager::ingest(std::span<const TimePoint> points) {
  std::vector<std::pair<const TimePoint*, std::string>> accepted;
  accepted.reserve(points.size());
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& p : points) {
      auto parts = split_device_key(p.series);
      if (!parts) continue;
      auto it = devices_.find(parts->first);
      if (it == devices_.end()) continue;
      const auto& props = it->second->descriptor.properties;
      if (std::find(props.begin(), props.end(), parts->second) == props.end()) continue;
      accepted.emplace_back(&p, std::move(parts->first));
    }
  }
  std::size_t n = 0;
  std::vector<ContextEntry> events;
  events.reserve(accepted.size());
  std::unique_lock lock(context_mu_);
  for (const auto& [p, source] : accepted)
    if (update_context_locked(p->series, p->value, p->timestamp_ns, source, events)) ++n;
  events_.publish(std::move(events));
  return n;
}

std::optional<ContextEntry> DeviceManager::get(std::string_view key) const {
  std::shared_lock lock(context_mu_);
  auto it = context_.find(key);
  if (it == context_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, ContextEntry> DeviceManager::snapshot_context() const {
  std::shared_lock lock(context_mu_);
  return {context_.begin(), context_.end()};
}

std::shared_ptr<EventStream> DeviceManager::subscribe_events(const std::string& pattern, std::size_t capacity) {
  return events_.subscribe(pattern, capacity);
}

std::size_t DeviceManager::refresh_from_history(std::string_view key, TimestampNs window_ns) {
  if (!history_) fail(ErrorKind::Unavailable, "no time-series store attached");
  if (window_ns < 0) fail(ErrorKind::Domain, "refresh window must be >= 0");
  const TimestampNs now = clock_.now_ns();
  auto points = history_->query_range(key, now - window_ns, now == INT64_MAX ? now : now + 1);
  if (points.empty()) return 0;
  const TimePoint& newest = points.back();
  auto parts = split_device_key(key);
  std::vector<ContextEntry> events;
  std::unique_lock lock(context_mu_);
  update_context_locked(newest.series, newest.value, newest.timestamp_ns, parts ? parts->first : std::string{}, events,
                        true);
  events_.publish(std::move(events));
  return points.size();
}

}  // namespace edgeml::gateway
