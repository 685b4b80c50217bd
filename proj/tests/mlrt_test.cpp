#include <atomic>
#include <set>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/mlrt/ml_manager.hpp"
#include "edgeml/tsdb/store.hpp"

using namespace edgeml;
using namespace edgeml::mlrt;
using boost::LinearModel;

namespace {

PortableModel linear_model(const std::string& name, std::int64_t version, std::vector<std::string> features,
                           std::vector<double> w, double b) {
  LinearModel m;
  m.feature_names = std::move(features);
  m.coefficients = std::move(w);
  m.intercept = b;
  PortableModel pm;
  pm.body = m;
  pm.metadata.name = name;
  pm.metadata.version = version;
  return pm;
}

PortableModel constant_tree_model(const std::string& name, std::int64_t version, double value) {
  boost::AdaBoostR2Model m;
  m.feature_names = {"x"};
  boost::RegressionTree t;
  t.nodes.push_back({std::nullopt, std::nullopt, std::nullopt, std::nullopt, value});
  m.learners = {t};
  m.log_weights = {1.0};
  PortableModel pm;
  pm.body = m;
  pm.metadata.name = name;
  pm.metadata.version = version;
  return pm;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

struct Fixture {
  ManualClock clock{1000 * kNsPerSecond};
  tsdb::Store store;
  MlManager ml{clock, &store};
  Fixture() { ml.set_feature_source("x", FeatureSource::request()); }
};

}  // namespace

TEST(Mlrt, DeployStagesAndActivateSwaps) {
  Fixture f;
  auto rec = f.ml.deploy(constant_tree_model("cop", 1, 4.2));
  EXPECT_EQ(rec.status, ModelStatus::Staged);
  EXPECT_EQ(kind_of([&] { f.ml.predict("cop", {{"x", 0}}); }), ErrorKind::Unavailable);
  EXPECT_FALSE(f.ml.activate("cop", 1).has_value());
  auto p = f.ml.predict("cop", {{"x", 123}});
  EXPECT_EQ(p.value, 4.2);
  EXPECT_EQ(p.version, 1);
  f.ml.deploy(constant_tree_model("cop", 2, 5.0));
  EXPECT_EQ(f.ml.activate("cop", 2), 1);
  EXPECT_EQ(f.ml.predict("cop", {{"x", 0}}).version, 2);
  EXPECT_EQ(kind_of([&] { f.ml.activate("cop", 9); }), ErrorKind::NotFound);
}

TEST(Mlrt, RedeploySameVersionIsIdempotent) {
  Fixture f;
  f.ml.deploy(constant_tree_model("cop", 1, 4.2));
  EXPECT_NO_THROW(f.ml.deploy(constant_tree_model("cop", 1, 4.2)));
  EXPECT_EQ(f.ml.models().size(), 1u);
  EXPECT_EQ(kind_of([&] { f.ml.deploy(constant_tree_model("cop", 1, 9.9)); }), ErrorKind::Conflict);
}

TEST(Mlrt, MissingFeatureSourceIsSchemaErrorNamingIt) {
  Fixture f;
  try {
    f.ml.deploy(linear_model("m", 1, {"x", "humidity"}, {1, 1}, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("humidity"), std::string::npos);
  }
}

TEST(Mlrt, UnparseableDocumentIsUnsupportedFormat) {
  Fixture f;
  EXPECT_EQ(kind_of([&] { f.ml.deploy_document("{\"format_version\": 99}"); }), ErrorKind::UnsupportedFormat);
}

TEST(Mlrt, LinearPrediction) {
  Fixture f;
  f.ml.deploy(linear_model("lin", 1, {"x"}, {2}, 1));
  f.ml.activate("lin", 1);
  EXPECT_EQ(f.ml.predict("lin", {{"x", 3}}).value, 7.0);
}

TEST(Mlrt, AutoAssemblyFromSeriesAndStaleness) {
  Fixture f;
  std::vector<TimePoint> pts{{"device.weather.t_ambient_c", f.clock.now_ns(), 30.0}};
  f.store.append_batch(pts);
  f.ml.deploy(linear_model("m", 1, {"device.weather.t_ambient_c"}, {0.1}, 0));
  f.ml.activate("m", 1);
  f.ml.sync();
  EXPECT_DOUBLE_EQ(f.ml.predict("m").value, 3.0);

  std::vector<TimePoint> later{{"device.weather.t_ambient_c", f.clock.now_ns() + 10 * kNsPerSecond, 20.0}};
  f.store.append_batch(later);
  f.ml.sync();
  f.clock.advance(10 * kNsPerSecond);
  EXPECT_DOUBLE_EQ(f.ml.predict("m").value, 2.0);

  f.clock.advance(10 * 60 * kNsPerSecond);
  EXPECT_EQ(kind_of([&] { f.ml.predict("m"); }), ErrorKind::StaleData);
}

TEST(Mlrt, StalenessBoundIsConfigurable) {
  ManualClock clock(0);
  tsdb::Store store;
  MlOptions opts;
  opts.staleness_ns = 5 * 60 * kNsPerSecond;
  MlManager ml(clock, &store, opts);
  std::vector<TimePoint> pts{{"s", 0, 1.0}};
  store.append_batch(pts);
  ml.deploy(linear_model("m", 1, {"s"}, {1}, 0));
  ml.activate("m", 1);
  clock.set(10 * 60 * kNsPerSecond);
  EXPECT_EQ(kind_of([&] { ml.predict("m"); }), ErrorKind::StaleData);
  clock.set(5 * 60 * kNsPerSecond);
  EXPECT_NO_THROW(ml.predict("m"));
}

TEST(Mlrt, DerivedAndRequestSources) {
  Fixture f;
  f.ml.set_feature_source("age", FeatureSource::derived([](TimestampNs) { return 4.0; }));
  f.ml.deploy(linear_model("m", 1, {"x", "age"}, {1, 10}, 0));
  f.ml.activate("m", 1);
  EXPECT_EQ(f.ml.predict("m", {{"x", 1}}).value, 41.0);
  EXPECT_EQ(kind_of([&] { f.ml.predict("m"); }), ErrorKind::Schema);
}

TEST(Mlrt, EnsembleMedian) {
  Fixture f;
  for (auto [n, v] : {std::pair{"a", 4.0}, {"b", 5.0}, {"c", 9.0}}) {
    f.ml.deploy(constant_tree_model(n, 1, v));
    f.ml.activate(n, 1);
  }
  FeatureMap x{{"x", 0}};
  EXPECT_EQ(f.ml.predict_ensemble({"a"}, x).value, 4.0);
  auto e = f.ml.predict_ensemble({"a", "b", "c"}, x);
  EXPECT_EQ(e.value, 5.0);
  EXPECT_EQ(e.members.size(), 3u);
  f.ml.deploy(constant_tree_model("d", 1, 6.0));
  f.ml.activate("d", 1);
  EXPECT_EQ(f.ml.predict_ensemble({"a", "d"}, x).value, 4.0);
  EXPECT_EQ(f.ml.predict_ensemble({"a", "missing"}, x).value, 4.0);
  EXPECT_EQ(kind_of([&] { f.ml.predict_ensemble({"missing"}, x); }), ErrorKind::Unavailable);
}

TEST(Mlrt, EnsembleWithinMemberBounds) {
  Fixture f;
  std::vector<std::string> names;
  for (int i = 0; i < 6; ++i) {
    names.push_back("m" + std::to_string(i));
    f.ml.deploy(linear_model(names.back(), 1, {"x"}, {double(i) - 2.5}, i));
    f.ml.activate(names.back(), 1);
  }
  for (double x = -3; x <= 3; x += 0.5) {
    auto e = f.ml.predict_ensemble(names, {{"x", x}});
    double lo = 1e300, hi = -1e300;
    for (const auto& m : e.members) lo = std::min(lo, m.value), hi = std::max(hi, m.value);
    EXPECT_GE(e.value, lo);
    EXPECT_LE(e.value, hi);
  }
}

TEST(Mlrt, HotSwapTagsOneChangePointPerClient) {
  Fixture f;
  f.ml.deploy(constant_tree_model("cop", 1, 1.0));
  f.ml.deploy(constant_tree_model("cop", 2, 2.0));
  f.ml.activate("cop", 1);
  constexpr int kClients = 8, kPerClient = 125;
  std::vector<std::vector<std::int64_t>> tags(kClients);
  std::atomic<int> started{0};
  std::vector<std::thread> clients;
  for (int c = 0; c < kClients; ++c)
    clients.emplace_back([&, c] {
      ++started;
      for (int i = 0; i < kPerClient; ++i) {
        auto p = f.ml.predict("cop", {{"x", double(i)}});
        EXPECT_EQ(p.value, double(p.version));
        tags[c].push_back(p.version);
      }
    });
  while (started < kClients) std::this_thread::yield();
  f.ml.activate("cop", 2);
  for (auto& t : clients) t.join();
  int total = 0;
  for (const auto& stream : tags) {
    total += static_cast<int>(stream.size());
    int changes = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      EXPECT_TRUE(stream[i] == 1 || stream[i] == 2);
      if (i > 0 && stream[i] != stream[i - 1]) {
        ++changes;
        EXPECT_EQ(stream[i - 1], 1);
      }
    }
    EXPECT_LE(changes, 1);
  }
  EXPECT_EQ(total, kClients * kPerClient);
}

TEST(Mlrt, RollbackNeedsAnOlderVersion) {
  Fixture f;
  f.ml.deploy(constant_tree_model("cop", 1, 1.0));
  f.ml.activate("cop", 1);
  try {
    f.ml.rollback("cop");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "no previous version");
  }
  f.ml.deploy(constant_tree_model("cop", 2, 2.0));
  f.ml.activate("cop", 2);
  EXPECT_EQ(f.ml.rollback("cop"), 1);
  EXPECT_EQ(f.ml.active_version("cop"), 1);
}

TEST(Mlrt, LabelsFeedExportQueueOnce) {
  Fixture f;
  f.ml.deploy(constant_tree_model("cop", 1, 4.0));
  f.ml.activate("cop", 1);
  auto p = f.ml.predict("cop", {{"x", 1}});
  f.ml.retain({7, "c1"}, p, {{"x", 1}});
  EXPECT_EQ(kind_of([&] { f.ml.record_label({8, "c1"}, 4.0); }), ErrorKind::NotFound);
  auto s = f.ml.record_label({7, "c1"}, 4.4);
  EXPECT_EQ(s.model_version, 1);
  EXPECT_EQ(s.predicted, 4.0);
  EXPECT_EQ(kind_of([&] { f.ml.record_label({7, "c1"}, 4.4); }), ErrorKind::Conflict);
  EXPECT_EQ(kind_of([&] { f.ml.record_label({7, "c2"}, 0.0); }), ErrorKind::Domain);
  auto batch = f.ml.export_training_batch(10);
  ASSERT_EQ(batch.samples.size(), 1u);
  EXPECT_EQ(batch.samples[0].key.str(), "7:c1");
  auto row = nlohmann::json::parse(batch.ndjson());
  EXPECT_EQ(row["label"], 4.4);
  EXPECT_EQ(labeled_sample_from_json(row).key, (SampleKey{7, "c1"}));
}

TEST(Mlrt, ExportIsFifoWithAckAndRequeue) {
  Fixture f;
  f.ml.deploy(constant_tree_model("cop", 1, 4.0));
  f.ml.activate("cop", 1);
  EXPECT_TRUE(f.ml.export_training_batch(3).samples.empty());
  for (int i = 0; i < 5; ++i) {
    f.ml.retain({i, ""}, f.ml.predict("cop", {{"x", 0}}), {{"x", 0}});
    f.ml.record_label({i, ""}, 4.0);
  }
  auto first = f.ml.export_training_batch(3);
  ASSERT_EQ(first.samples.size(), 3u);
  EXPECT_EQ(first.samples[0].key.cycle_id, 0);
  EXPECT_EQ(first.samples[2].key.cycle_id, 2);
  // Ack lost: the same samples come back.
  f.ml.requeue(first.batch_id);
  auto retry = f.ml.export_training_batch(3);
  EXPECT_EQ(retry.samples[0].key.cycle_id, 0);
  f.ml.acknowledge(retry.batch_id);
  auto second = f.ml.export_training_batch(3);
  ASSERT_EQ(second.samples.size(), 2u);
  EXPECT_EQ(second.samples[0].key.cycle_id, 3);
  f.ml.acknowledge(second.batch_id);
  EXPECT_EQ(f.ml.pending_export(), 0u);
}

TEST(Mlrt, DriftAlarmOnTwentyPercentNotFive) {
  for (double bias : {0.20, 0.05, 0.0}) {
    Fixture f;
    f.ml.deploy(constant_tree_model("cop", 1, 5.0));
    f.ml.activate("cop", 1);
    EXPECT_FALSE(f.ml.drift_status("cop").alarm);
    bool tripped_at = false;
    for (int i = 0; i < 50; ++i) {
      auto p = f.ml.predict("cop", {{"x", 0}});
      f.ml.retain({i, ""}, p, {{"x", 0}});
      f.ml.record_label({i, ""}, p.value / (1.0 + bias));
      if (f.ml.drift_status("cop").alarm) tripped_at = true;
      if (i < 49) EXPECT_FALSE(f.ml.drift_status("cop").alarm) << "window not full yet";
    }
    EXPECT_EQ(tripped_at, bias > 0.15) << bias;
  }
}

TEST(Mlrt, LocalRetrainStagesChildVersion) {
  Fixture f;
  boost::Dataset d;
  d.feature_names = {"x"};
  for (int i = 0; i < 20; ++i) d.add_row(std::vector<double>{double(i)}, i < 10 ? 4.0 : 5.0);
  PortableModel pm;
  pm.body = boost::fit_adaboost_r2(d, {5, boost::LossKind::Linear, 2});
  pm.metadata.name = "cop";
  f.ml.deploy(pm);
  f.ml.activate("cop", 1);
  EXPECT_EQ(kind_of([&] { f.ml.retrain_local("cop"); }), ErrorKind::Domain);
  for (int i = 0; i < 20; ++i) {
    FeatureMap x{{"x", double(i)}};
    f.ml.retain({i, ""}, f.ml.predict("cop", x), x);
    f.ml.record_label({i, ""}, i < 10 ? 3.0 : 6.0);
  }
  auto rec = f.ml.retrain_local("cop", 5);
  EXPECT_EQ(rec.version, 2);
  EXPECT_EQ(rec.portable->metadata.parent_version, 1);
  EXPECT_EQ(rec.status, ModelStatus::Staged);
  const auto& before = std::get<boost::AdaBoostR2Model>(pm.body);
  const auto& after = std::get<boost::AdaBoostR2Model>(rec.portable->body);
  EXPECT_GT(after.rounds(), before.rounds());
  for (std::size_t k = 0; k < before.rounds(); ++k) EXPECT_EQ(after.learners[k], before.learners[k]);
}

TEST(Mlrt, AutoRetrainOnDrift) {
  ManualClock clock;
  MlOptions opts;
  opts.auto_retrain = true;
  opts.drift_window = 10;
  MlManager ml(clock, nullptr, opts);
  ml.set_feature_source("x", FeatureSource::request());
  boost::Dataset d;
  d.feature_names = {"x"};
  for (int i = 0; i < 10; ++i) d.add_row(std::vector<double>{double(i)}, 5.0 + 0.1 * (i % 3));
  PortableModel pm;
  pm.body = boost::fit_adaboost_r2(d, {5, boost::LossKind::Linear, 2});
  pm.metadata.name = "cop";
  ml.deploy(pm);
  ml.activate("cop", 1);
  for (int i = 0; i < 10; ++i) {
    FeatureMap x{{"x", double(i)}};
    ml.retain({i, ""}, ml.predict("cop", x), x);
    ml.record_label({i, ""}, 3.0);
  }
  EXPECT_EQ(ml.active_version("cop"), 2);
  EXPECT_FALSE(ml.drift_status("cop").alarm);
}
