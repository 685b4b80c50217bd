#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "edgeml/common/error.hpp"
#include "edgeml/tsdb/store.hpp"

using namespace edgeml;
using namespace edgeml::tsdb;
using namespace std::chrono_literals;

namespace {

constexpr TimestampNs kMin = std::numeric_limits<TimestampNs>::min();
constexpr TimestampNs kMax = std::numeric_limits<TimestampNs>::max();

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("edgeml_tsdb_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Tsdb, EmptyBatchAppendsNothing) {
  Store db;
  EXPECT_EQ(db.append_batch({}), 0u);
}

TEST(Tsdb, RejectsNonFinite) {
  Store db;
  std::vector<TimePoint> pts{{"a", 1, 1.0}, {"a", 2, std::nan("")}, {"a", 3, 3.0}};
  EXPECT_EQ(db.append_batch(pts), 2u);
  EXPECT_EQ(db.point_count("a"), 2u);
}

TEST(Tsdb, RoundTrip) {
  Store db;
  std::vector<TimePoint> pts{{"s", 10, 1.5}, {"s", 20, -2.0}, {"s", 30, 0.25}};
  db.append_batch(pts);
  EXPECT_EQ(db.query_range("s", 10, 31), pts);
}

TEST(Tsdb, EmptyStoreQueryIsEmpty) {
  Store db;
  EXPECT_TRUE(db.query_range("nothing", 0, 100).empty());
}

TEST(Tsdb, HalfOpenInterval) {
  Store db;
  std::vector<TimePoint> pts{{"s", 1, 1.0}, {"s", 2, 2.0}, {"s", 3, 3.0}};
  db.append_batch(pts);
  auto got = db.query_range("s", 2, 3);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].timestamp_ns, 2);
}

TEST(Tsdb, InvertedRangeIsDomainError) {
  Store db;
  try {
    db.query_range("s", 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(Tsdb, OutOfOrderAppendsQueriedSorted) {
  Store db;
  std::vector<TimePoint> first{{"s", 3, 3.0}};
  std::vector<TimePoint> second{{"s", 1, 1.0}};
  db.append_batch(first);
  db.append_batch(second);
  auto got = db.query_range("s", kMin, kMax);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].timestamp_ns, 1);
  EXPECT_EQ(got[1].timestamp_ns, 3);
}

// Property: a full-range query returns exactly the accepted appends sorted by
// time, checked against an independent std::stable_sort of the input.
TEST(Tsdb, QueryEqualsSortedMultisetOfAppends) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Store db;
    std::vector<TimePoint> reference;
    std::uniform_int_distribution<int> ts(0, 50), batch(0, 30);
    std::uniform_real_distribution<double> val(-10, 10);
    for (int b = 0; b < 10; ++b) {
      std::vector<TimePoint> pts;
      for (int k = batch(rng); k > 0; --k) pts.push_back({"x", ts(rng), val(rng)});
      db.append_batch(pts);
      reference.insert(reference.end(), pts.begin(), pts.end());
    }
    std::stable_sort(reference.begin(), reference.end(),
                     [](const TimePoint& a, const TimePoint& b) { return a.timestamp_ns < b.timestamp_ns; });
    EXPECT_EQ(db.query_range("x", kMin, kMax), reference);
  }
}

TEST(Tsdb, DownsampleAggregates) {
  Store db;
  const TimestampNs s = kNsPerSecond;
  std::vector<TimePoint> pts{{"m", 0, 2.0}, {"m", s, 4.0}, {"m", 10 * s, 1.0}, {"m", 11 * s, 5.0}, {"m", 12 * s, 3.0}};
  db.append_batch(pts);
  auto mean = db.downsample("m", 10, Aggregate::Mean);
  ASSERT_EQ(mean.size(), 2u);
  EXPECT_EQ(mean[0].value, 3.0);
  EXPECT_EQ(mean[0].timestamp_ns, 0);
  EXPECT_EQ(mean[1].timestamp_ns, 10 * s);
  auto mx = db.downsample("m", 10, Aggregate::Max);
  EXPECT_EQ(mx[1].value, 5.0);
  auto mn = db.downsample("m", 10, Aggregate::Min);
  EXPECT_EQ(mn[1].value, 1.0);
  auto last = db.downsample("m", 10, Aggregate::Last);
  EXPECT_EQ(last[1].value, 3.0);
  EXPECT_TRUE(db.downsample("empty", 10, Aggregate::Mean).empty());
}

TEST(Tsdb, UnknownAggregateIsDomainError) {
  EXPECT_THROW(parse_aggregate("median"), Error);
  EXPECT_EQ(parse_aggregate("last"), Aggregate::Last);
  Store db;
  EXPECT_THROW(db.downsample("m", 0, Aggregate::Mean), Error);
}

TEST(Tsdb, SubscriptionFiltersByPattern) {
  Store db;
  auto sub = db.subscribe("a.*");
  std::vector<TimePoint> pts{{"a.x", 1, 1.0}, {"b.y", 1, 2.0}};
  db.append_batch(pts);
  db.wait_dispatched();
  auto got = sub->drain();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].series, "a.x");
}

TEST(Tsdb, SubscriptionSeesOnlyLaterAppends) {
  Store db;
  std::vector<TimePoint> before{{"a.x", 1, 1.0}};
  db.append_batch(before);
  auto sub = db.subscribe("a.x");
  std::vector<TimePoint> after{{"a.x", 2, 2.0}};
  db.append_batch(after);
  db.wait_dispatched();
  auto got = sub->drain();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].timestamp_ns, 2);
}

TEST(Tsdb, TenThousandDeliveriesInOrder) {
  Store db;
  auto sub = db.subscribe("seq");
  for (int i = 0; i < 10000; ++i) {
    std::vector<TimePoint> p{{"seq", i, static_cast<double>(i)}};
    db.append_batch(p);
  }
  db.wait_dispatched();
  auto got = sub->drain();
  ASSERT_EQ(got.size(), 10000u);
  for (int i = 0; i < 10000; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)].value, i);
}

TEST(Tsdb, CancelStopsDelivery) {
  Store db;
  auto sub = db.subscribe("*");
  sub->cancel();
  std::vector<TimePoint> p{{"z", 1, 1.0}};
  db.append_batch(p);
  db.wait_dispatched();
  EXPECT_TRUE(sub->drain().empty());
  EXPECT_EQ(sub->delivered(), 0u);
}

TEST(Tsdb, InvalidGlobIsSyntaxError) {
  Store db;
  try {
    db.subscribe("a.[bc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Syntax);
  }
  EXPECT_THROW(db.subscribe(""), Error);
}

TEST(Tsdb, SlowSubscriberIsMarkedLaggingWithoutBlockingAppends) {
  Store db;
  auto sub = db.subscribe("q", 4);
  for (int i = 0; i < 10; ++i) {
    std::vector<TimePoint> p{{"q", i, 1.0}};
    EXPECT_EQ(db.append_batch(p), 1u);
  }
  db.wait_dispatched();
  EXPECT_TRUE(sub->lagging());
  EXPECT_EQ(sub->dropped(), 6u);
  EXPECT_EQ(sub->drain().size(), 4u);
  EXPECT_THROW(sub->drain(), Error);
  EXPECT_EQ(db.point_count("q"), 10u);
}

TEST(Tsdb, ConcurrentAppendersKeepPerSeriesOrder) {
  Store db;
  auto sub = db.subscribe("w*");
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w) {
    writers.emplace_back([&db, w] {
      const std::string series = "w" + std::to_string(w);
      for (int i = 0; i < 2000; ++i) {
        std::vector<TimePoint> p{{series, i, static_cast<double>(i)}};
        db.append_batch(p);
      }
    });
  }
  for (auto& t : writers) t.join();
  db.wait_dispatched();
  std::map<std::string, int> next;
  for (const auto& p : sub->drain()) {
    EXPECT_EQ(p.value, next[p.series]) << p.series;
    next[p.series]++;
  }
  for (int w = 0; w < 4; ++w) EXPECT_EQ(next["w" + std::to_string(w)], 2000);
}

TEST(Tsdb, RetentionDropsOldPoints) {
  StoreOptions opts;
  opts.retention_ns = 10;
  Store db(opts);
  std::vector<TimePoint> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({"r", i, 1.0});
  db.append_batch(pts);
  EXPECT_EQ(db.enforce_retention(25), 15u);
  auto left = db.query_range("r", kMin, kMax);
  ASSERT_EQ(left.size(), 15u);
  EXPECT_EQ(left.front().timestamp_ns, 15);
}

TEST(Tsdb, LogFilesPersistAcrossRestart) {
  const auto dir = temp_dir("persist");
  std::vector<TimePoint> pts{{"device.c/1.power_kw", 5, 1.25}, {"device.c/1.power_kw", 3, -7.0}, {"other", 1, 9.0}};
  {
    StoreOptions opts;
    opts.data_dir = dir;
    Store db(opts);
    db.append_batch(pts);
    db.flush();
    EXPECT_EQ(std::filesystem::file_size(dir / (Store::encode_file_name("device.c/1.power_kw") + ".log")), 32u);
  }
  StoreOptions opts;
  opts.data_dir = dir;
  Store reopened(opts);
  auto got = reopened.query_range("device.c/1.power_kw", kMin, kMax);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].timestamp_ns, 3);
  EXPECT_EQ(got[0].value, -7.0);
  EXPECT_EQ(got[1].value, 1.25);

  reopened.prune(4);
  Store after_prune(opts);
  EXPECT_EQ(after_prune.point_count("device.c/1.power_kw"), 1u);
  EXPECT_EQ(after_prune.point_count("other"), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Tsdb, FileNameEncodingRoundTrips) {
  for (std::string s : {"plain.name", "with space/and%percent", "ünï"})
    EXPECT_EQ(Store::decode_file_name(Store::encode_file_name(s)), s);
}
