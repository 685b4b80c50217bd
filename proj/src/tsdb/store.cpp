#include "edgeml/tsdb/store.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "edgeml/common/error.hpp"

namespace edgeml::tsdb {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "on-disk log assumes a little-endian host");

namespace {

constexpr std::size_t kRecordBytes = 16;

void encode_record(char* out, TimestampNs t, double v) {
  std::memcpy(out, &t, 8);
  std::memcpy(out + 8, &v, 8);
}

}  // namespace

Aggregate parse_aggregate(std::string_view name) {
  if (name == "mean") return Aggregate::Mean;
  if (name == "min") return Aggregate::Min;
  if (name == "max") return Aggregate::Max;
  if (name == "last") return Aggregate::Last;
  fail(ErrorKind::Domain, "unknown aggregate '" + std::string(name) + "'");
}

void Store::Series::sort_locked() const {
  if (sorted) return;
  std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.t < b.t; });
  sorted = true;
}

Store::Store(StoreOptions options) : options_(std::move(options)), fanout_(options_.subscriber_capacity) {
  if (!options_.data_dir.empty()) {
    fs::create_directories(options_.data_dir);
    load_from_disk();
  }
}

Store::~Store() {
  try {
    flush();
  } catch (...) {
    // destructor must not throw; unflushed points are lost
  }
}

std::string Store::encode_file_name(std::string_view series) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : series) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string Store::decode_file_name(std::string_view stem) {
  std::string out;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    if (stem[i] == '%' && i + 2 < stem.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(stem.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(stem[i]);
    }
  }
  return out;
}

fs::path Store::file_for(std::string_view series) const {
  return options_.data_dir / (encode_file_name(series) + ".log");
}

void Store::load_from_disk() {
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".log") continue;
    std::string name = decode_file_name(entry.path().stem().string());
    std::ifstream in(entry.path(), std::ios::binary);
    auto series = std::make_unique<Series>();
    char buf[kRecordBytes];
    while (in.read(buf, kRecordBytes)) {
      Sample s;
      std::memcpy(&s.t, buf, 8);
      std::memcpy(&s.v, buf + 8, 8);
      if (!series->samples.empty() && s.t < series->samples.back().t) series->sorted = false;
      series->samples.push_back(s);
    }
    // a torn trailing record is ignored
    series_.emplace(std::move(name), std::move(series));
  }
}

Store::Series* Store::find(std::string_view series) const {
  std::shared_lock lock(map_mu_);
  auto it = series_.find(series);
  return it == series_.end() ? nullptr : it->second.get();
}

Store::Series& Store::get_or_create(const std::string& series) {
  if (Series* s = find(series)) return *s;
  std::unique_lock lock(map_mu_);
  auto [it, inserted] = series_.try_emplace(series, nullptr);
  if (inserted) it->second = std::make_unique<Series>();
  return *it->second;
}

std::size_t Store::append_batch(std::span<const TimePoint> points) {
  std::vector<TimePoint> accepted;
  accepted.reserve(points.size());
  const bool durable = !options_.data_dir.empty();
  std::lock_guard append_lock(append_mu_);
  Series* cached = nullptr;
  const std::string* cached_name = nullptr;
  for (const TimePoint& p : points) {
    if (!std::isfinite(p.value) || p.series.empty()) continue;
    if (!cached_name || *cached_name != p.series) {
      cached = &get_or_create(p.series);
      cached_name = &p.series;
    }
    {
      std::unique_lock lock(cached->mu);
      if (!cached->samples.empty() && p.timestamp_ns < cached->samples.back().t) cached->sorted = false;
      cached->samples.push_back({p.timestamp_ns, p.value});
      if (durable) cached->unflushed.push_back({p.timestamp_ns, p.value});
    }
    accepted.push_back(p);
  }
  const std::size_t n = accepted.size();
  fanout_.publish(std::move(accepted));
  return n;
}

std::vector<TimePoint> Store::query_range(std::string_view series, TimestampNs from, TimestampNs to) const {
  if (from > to) fail(ErrorKind::Domain, "query range is inverted");
  std::vector<TimePoint> out;
  Series* s = find(series);
  if (!s) return out;
  std::unique_lock lock(s->mu);
  s->sort_locked();
  auto cmp = [](const Sample& a, TimestampNs t) { return a.t < t; };
  auto lo = std::lower_bound(s->samples.begin(), s->samples.end(), from, cmp);
  auto hi = std::lower_bound(lo, s->samples.end(), to, cmp);
  out.reserve(static_cast<std::size_t>(hi - lo));
  const std::string name(series);
  for (auto it = lo; it != hi; ++it) out.push_back({name, it->t, it->v});
  return out;
}

std::optional<TimePoint> Store::latest(std::string_view series) const {
  Series* s = find(series);
  if (!s) return std::nullopt;
  std::unique_lock lock(s->mu);
  s->sort_locked();
  if (s->samples.empty()) return std::nullopt;
  return TimePoint{std::string(series), s->samples.back().t, s->samples.back().v};
}

std::vector<TimePoint> Store::downsample(std::string_view series, std::int64_t window_s, Aggregate agg) const {
  if (window_s <= 0) fail(ErrorKind::Domain, "downsample window must be > 0");
  const auto points = query_range(series, std::numeric_limits<TimestampNs>::min(), std::numeric_limits<TimestampNs>::max());
  const TimestampNs width = window_s * kNsPerSecond;
  auto window_start = [&](TimestampNs t) {
    TimestampNs q = t / width;
    if (t % width != 0 && t < 0) --q;
    return q * width;
  };
  std::vector<TimePoint> out;
  std::size_t i = 0;
  while (i < points.size()) {
    const TimestampNs start = window_start(points[i].timestamp_ns);
    double acc = points[i].value;
    double sum = points[i].value;
    std::size_t n = 1;
    std::size_t j = i + 1;
    for (; j < points.size() && window_start(points[j].timestamp_ns) == start; ++j) {
      const double v = points[j].value;
      sum += v;
      ++n;
      switch (agg) {
        case Aggregate::Min: acc = std::min(acc, v); break;
        case Aggregate::Max: acc = std::max(acc, v); break;
        case Aggregate::Last: acc = v; break;
        case Aggregate::Mean: break;
      }
    }
    const double value = agg == Aggregate::Mean ? sum / static_cast<double>(n) : acc;
    out.push_back({std::string(series), start, value});
    i = j;
  }
  return out;
}

std::shared_ptr<PointStream> Store::subscribe(const std::string& pattern, std::size_t capacity) {
  return fanout_.subscribe(pattern, capacity);
}

std::size_t Store::prune(TimestampNs before) {
  std::lock_guard append_lock(append_mu_);
  std::shared_lock map_lock(map_mu_);
  std::size_t removed = 0;
  for (auto& [name, s] : series_) {
    std::unique_lock lock(s->mu);
    s->sort_locked();
    auto keep = std::lower_bound(s->samples.begin(), s->samples.end(), before,
                                 [](const Sample& a, TimestampNs t) { return a.t < t; });
    const auto n = static_cast<std::size_t>(keep - s->samples.begin());
    if (n == 0) continue;
    removed += n;
    s->samples.erase(s->samples.begin(), keep);
    s->samples.shrink_to_fit();
    if (!options_.data_dir.empty()) {
      // rewrite the whole log from the retained run; this also flushes it
      const fs::path path = file_for(name);
      const fs::path tmp = path.string() + ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        std::vector<char> buf(kRecordBytes * s->samples.size());
        for (std::size_t k = 0; k < s->samples.size(); ++k)
          encode_record(buf.data() + kRecordBytes * k, s->samples[k].t, s->samples[k].v);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) fail(ErrorKind::Io, "cannot rewrite " + tmp.string());
      }
      fs::rename(tmp, path);
      s->unflushed.clear();
    }
  }
  return removed;
}

std::size_t Store::enforce_retention(TimestampNs now) { return prune(now - options_.retention_ns); }

void Store::flush() {
  if (options_.data_dir.empty()) return;
  std::shared_lock map_lock(map_mu_);
  for (auto& [name, s] : series_) {
    std::unique_lock lock(s->mu);
    if (s->unflushed.empty()) continue;
    std::vector<char> buf(kRecordBytes * s->unflushed.size());
    for (std::size_t k = 0; k < s->unflushed.size(); ++k)
      encode_record(buf.data() + kRecordBytes * k, s->unflushed[k].t, s->unflushed[k].v);
    std::ofstream out(file_for(name), std::ios::binary | std::ios::app);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::Io, "cannot append to " + file_for(name).string());
    s->unflushed.clear();
  }
}

std::vector<std::string> Store::series_names() const {
  std::shared_lock lock(map_mu_);
  std::vector<std::string> out;
  out.reserve(series_.size());
  for (const auto& [name, _] : series_) out.push_back(name);
  return out;
}

std::size_t Store::point_count() const {
  std::shared_lock lock(map_mu_);
  std::size_t n = 0;
  for (const auto& [_, s] : series_) {
    std::shared_lock slock(s->mu);
    n += s->samples.size();
  }
  return n;
}

std::size_t Store::point_count(std::string_view series) const {
  Series* s = find(series);
  if (!s) return 0;
  std::shared_lock lock(s->mu);
  return s->samples.size();
}

}  // namespace edgeml::tsdb
