#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgeml/boost/portable.hpp"
#include "edgeml/cloud/client.hpp"
#include "edgeml/cloud/dataset_store.hpp"
#include "edgeml/cloud/registry.hpp"
#include "edgeml/cloud/server.hpp"
#include "edgeml/cloud/sync.hpp"
#include "edgeml/rpc/http.hpp"

using namespace edgeml;
using namespace edgeml::cloud;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("edgeml_cloud_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string model_doc(double w, std::string dataset = "ds", std::optional<std::int64_t> parent = std::nullopt) {
  boost::LinearModel lm;
  lm.feature_names = {"x"};
  lm.coefficients = {w};
  lm.intercept = 0.5;
  boost::PortableModel pm;
  pm.body = lm;
  pm.metadata.name = "whatever";
  pm.metadata.dataset_id = std::move(dataset);
  pm.metadata.run_id = "run-" + std::to_string(w);
  pm.metadata.parent_version = parent;
  pm.metadata.trained_at = "2026-01-01T00:00:00Z";
  return boost::serialize(pm);
}

mlrt::LabeledSample sample(std::int64_t cycle, std::string item, double label) {
  mlrt::LabeledSample s;
  s.key = {cycle, std::move(item)};
  s.model_name = "cop";
  s.model_version = 1;
  s.features = {{"plr", 0.5}, {"t_ambient_c", 25.0}};
  s.predicted = label * 0.9;
  s.label = label;
  s.labeled_at_ns = cycle * 900 * kNsPerSecond;
  return s;
}

std::string ndjson(const std::vector<mlrt::LabeledSample>& samples) {
  std::string out;
  for (const auto& s : samples) out += mlrt::to_json_row(s).dump() + "\n";
  return out;
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

}  // namespace

TEST(Registry, VersionsStartAtOneAndIncrease) {
  ModelRegistry reg;
  EXPECT_EQ(reg.put("cop", model_doc(1)), 1);
  EXPECT_EQ(reg.put("cop", model_doc(2)), 2);
  EXPECT_EQ(reg.put("other", model_doc(3)), 1);
  EXPECT_EQ(reg.get("cop").version, 2);
  auto pm = boost::parse(reg.get("cop", 1).document);
  EXPECT_EQ(pm.metadata.name, "cop");
  EXPECT_EQ(pm.metadata.version, 1);
  EXPECT_EQ(reg.names(), (std::vector<std::string>{"cop", "other"}));
}

TEST(Registry, StoredBytesNeverChange) {
  ModelRegistry reg;
  reg.put("cop", model_doc(1));
  const std::string v1 = reg.get("cop", 1).document;
  reg.put("cop", model_doc(2));
  EXPECT_EQ(reg.get("cop", 1).document, v1);
  EXPECT_EQ(boost::serialize(boost::parse(v1)), v1);
}

TEST(Registry, InvalidDocumentLeavesCounterAlone) {
  ModelRegistry reg;
  reg.put("cop", model_doc(1));
  EXPECT_EQ(kind_of([&] { reg.put("cop", "{not json"); }), ErrorKind::UnsupportedFormat);
  EXPECT_NE(kind_of([&] { reg.put("cop", R"({"format_version":1})"); }), ErrorKind::NotFound);
  EXPECT_EQ(reg.put("cop", model_doc(2)), 2);
}

TEST(Registry, UnknownNameOrVersion) {
  ModelRegistry reg;
  EXPECT_EQ(kind_of([&] { reg.get("nope"); }), ErrorKind::NotFound);
  reg.put("cop", model_doc(1));
  EXPECT_EQ(kind_of([&] { reg.get("cop", 2); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { reg.get("cop", 0); }), ErrorKind::NotFound);
  EXPECT_TRUE(reg.list("nope").empty());
}

TEST(Registry, RejectsPathLikeNames) {
  ModelRegistry reg;
  for (const char* bad : {"", "../x", "a/b", ".hidden", "sp ace"})
    EXPECT_EQ(kind_of([&] { reg.put(bad, model_doc(1)); }), ErrorKind::Domain) << bad;
}

TEST(Registry, LineageComesFromMetadata) {
  ModelRegistry reg;
  reg.put("cop", model_doc(1, "commissioning"));
  reg.put("cop", model_doc(2, "uplink", 1));
  auto l = reg.list("cop");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0].lineage.dataset_id, "commissioning");
  EXPECT_FALSE(l[0].lineage.parent_version);
  EXPECT_EQ(l[1].lineage.parent_version, 1);
  EXPECT_TRUE(l[1].document.empty());
  nlohmann::json j = summary_json(l[1]);
  EXPECT_EQ(j["lineage"]["dataset_id"], "uplink");
}

TEST(Registry, FillsMissingTrainingTime) {
  ModelRegistry reg;
  auto pm = boost::parse(model_doc(1));
  pm.metadata.trained_at.clear();
  reg.put("cop", boost::serialize(pm));
  EXPECT_EQ(reg.get("cop").lineage.trained_at.size(), 20u);
}

TEST(Registry, PersistsAndReloads) {
  const auto dir = fresh_dir("registry");
  std::string v2;
  {
    ModelRegistry reg(dir);
    reg.put("cop", model_doc(1));
    reg.put("cop", model_doc(2));
    v2 = reg.get("cop").document;
  }
  EXPECT_TRUE(fs::exists(dir / "cop" / "v1.json"));
  ModelRegistry again(dir);
  EXPECT_EQ(again.get("cop").document, v2);
  EXPECT_EQ(again.put("cop", model_doc(3)), 3);
  fs::remove_all(dir);
}

TEST(Registry, GapOnDiskIsAnError) {
  const auto dir = fresh_dir("gap");
  {
    ModelRegistry reg(dir);
    reg.put("cop", model_doc(1));
    reg.put("cop", model_doc(2));
  }
  fs::remove(dir / "cop" / "v1.json");
  EXPECT_EQ(kind_of([&] { ModelRegistry r(dir); }), ErrorKind::Io);
  fs::remove_all(dir);
}

TEST(Registry, ConcurrentPutsHaveNoGaps) {
  ModelRegistry reg;
  std::vector<std::thread> threads;
  std::mutex mu;
  std::vector<std::int64_t> got;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        const auto v = reg.put(t % 2 ? "a" : "b", model_doc(t * 100 + i));
        std::lock_guard lock(mu);
        got.push_back(v);
      }
    });
  for (auto& th : threads) th.join();
  for (const char* name : {"a", "b"}) {
    auto l = reg.list(name);
    ASSERT_EQ(l.size(), 100u);
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_EQ(l[i].version, static_cast<std::int64_t>(i + 1));
  }
}

TEST(Datasets, IdempotentUpload) {
  DatasetStore ds;
  std::vector<mlrt::LabeledSample> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(sample(i, "A", 5.0 + i));
  auto r1 = ds.upload("uplink", ndjson(batch));
  EXPECT_EQ(r1.accepted, 10u);
  auto r2 = ds.upload("uplink", ndjson(batch));
  EXPECT_EQ(r2.accepted, 0u);
  EXPECT_EQ(r2.duplicates, 10u);
  EXPECT_EQ(ds.size("uplink"), 10u);
}

TEST(Datasets, MalformedRowsAreCounted) {
  DatasetStore ds;
  std::string text = ndjson({sample(1, "A", 5.0)}) + "{broken\n\n" + R"({"cycle_id": 2})" + "\n" +
                     ndjson({sample(3, "A", 5.0)});
  auto r = ds.upload("d", text);
  EXPECT_EQ(r.accepted, 2u);
  EXPECT_EQ(r.rejected, 2u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].rfind("line 2:", 0), 0u);
  EXPECT_EQ(r.errors[1].rfind("line 4:", 0), 0u);
}

TEST(Datasets, FetchIsSortedUnionOfUploads) {
  std::mt19937_64 rng(3);
  DatasetStore ds;
  std::set<std::pair<std::int64_t, std::string>> oracle;
  for (int round = 0; round < 20; ++round) {
    std::vector<mlrt::LabeledSample> batch;
    for (int k = 0; k < 30; ++k) {
      const std::int64_t c = std::uniform_int_distribution<std::int64_t>(0, 200)(rng);
      const std::string item(1, "ABC"[rng() % 3]);
      batch.push_back(sample(c, item, 4.0));
    }
    std::shuffle(batch.begin(), batch.end(), rng);
    std::size_t fresh = 0;
    for (const auto& s : batch) fresh += oracle.insert({s.key.cycle_id, s.key.item}).second;
    EXPECT_EQ(ds.upload("d", batch).accepted, fresh);
  }
  auto got = ds.fetch("d");
  ASSERT_EQ(got.size(), oracle.size());
  auto it = oracle.begin();
  for (const auto& s : got) {
    EXPECT_EQ(std::make_pair(s.key.cycle_id, s.key.item), *it);
    ++it;
  }
  auto ranged = ds.fetch("d", {50, 60});
  for (const auto& s : ranged) {
    EXPECT_GE(s.key.cycle_id, 50);
    EXPECT_LE(s.key.cycle_id, 60);
  }
  std::size_t expect = 0;
  for (const auto& [c, _] : oracle) expect += c >= 50 && c <= 60;
  EXPECT_EQ(ranged.size(), expect);
}

TEST(Datasets, UnknownDatasetAndBadId) {
  DatasetStore ds;
  EXPECT_EQ(kind_of([&] { ds.fetch("nope"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { ds.upload("../etc", ""); }), ErrorKind::Domain);
}

TEST(Datasets, PersistsAndToleratesTornTail) {
  const auto dir = fresh_dir("datasets");
  {
    DatasetStore ds(dir);
    ds.upload("d", ndjson({sample(1, "A", 5.0), sample(2, "A", 5.5)}));
  }
  {
    std::ofstream out(dir / "d.ndjson", std::ios::app);
    out << R"({"cycle_id": 3, "fea)";
  }
  DatasetStore again(dir);
  EXPECT_EQ(again.size("d"), 2u);
  EXPECT_EQ(again.fetch("d")[1].label, 5.5);
  fs::remove_all(dir);
}

TEST(Endpoint, Parsing) {
  EXPECT_EQ(rpc::parse_endpoint("http://localhost:8080").port, 8080);
  EXPECT_EQ(rpc::parse_endpoint("127.0.0.1:9000/").host, "127.0.0.1");
  EXPECT_EQ(rpc::parse_endpoint("example").port, 80);
  EXPECT_EQ(kind_of([] { rpc::parse_endpoint("https://x"); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { rpc::parse_endpoint("http://x:99999"); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { rpc::parse_endpoint("http://x/path"); }), ErrorKind::Domain);
}

TEST(StatusMapping, RoundTripsKinds) {
  for (ErrorKind k : {ErrorKind::NotFound, ErrorKind::Schema, ErrorKind::QuotaExceeded, ErrorKind::Unavailable}) {
    EXPECT_EQ(kind_of([&] { rpc::raise_response_error(rpc::status_for(k), rpc::error_json(k, "m")); }), k);
  }
  EXPECT_EQ(kind_of([] { rpc::raise_response_error(404, "plain"); }), ErrorKind::NotFound);
}

class CloudHttp : public ::testing::Test {
 protected:
  ModelRegistry registry;
  DatasetStore datasets;
  CloudServer server{registry, datasets};
  std::unique_ptr<CloudClient> client;

  void SetUp() override {
    const int port = server.start();
    client = std::make_unique<CloudClient>("http://127.0.0.1:" + std::to_string(port));
  }
};

TEST_F(CloudHttp, ModelRoundTrip) {
  EXPECT_TRUE(client->list_models().empty());
  EXPECT_TRUE(client->list_versions("cop").empty());
  EXPECT_EQ(client->put_model("cop", model_doc(1)), 1);
  EXPECT_EQ(client->put_model("cop", model_doc(2, "uplink", 1)), 2);
  auto latest = client->get_model("cop");
  EXPECT_EQ(latest.version, 2);
  EXPECT_EQ(latest.document, registry.get("cop").document);
  EXPECT_EQ(latest.lineage.parent_version, 1);
  EXPECT_EQ(client->get_model("cop", 1).document, registry.get("cop", 1).document);
  auto versions = client->list_versions("cop");
  ASSERT_EQ(versions.size(), 2u);
  EXPECT_EQ(versions[1].lineage.dataset_id, "uplink");
  EXPECT_EQ(client->list_models(), (std::vector<std::string>{"cop"}));
}

TEST_F(CloudHttp, ErrorsKeepTheirKind) {
  EXPECT_EQ(kind_of([&] { client->get_model("nope"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { client->put_model("cop", "{oops"); }), ErrorKind::UnsupportedFormat);
  EXPECT_EQ(kind_of([&] { client->fetch("nope"); }), ErrorKind::NotFound);
  EXPECT_EQ(client->put_model("cop", model_doc(1)), 1);
}

TEST_F(CloudHttp, UploadRetryAfterLostAckAddsNothing) {
  std::vector<mlrt::LabeledSample> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(sample(i, "B", 5.0));
  EXPECT_EQ(client->upload("uplink", ndjson(batch)).accepted, 10u);
  // The edge never saw the ack and sends the batch again.
  auto again = client->upload("uplink", ndjson(batch));
  EXPECT_EQ(again.accepted, 0u);
  EXPECT_EQ(again.duplicates, 10u);
  const std::string body = client->fetch("uplink", {2, 4});
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 3);
  std::set<std::string> ids;
  std::istringstream in(client->fetch("uplink"));
  for (std::string line; std::getline(in, line);) ids.insert(nlohmann::json::parse(line)["sample_id"].get<std::string>());
  EXPECT_EQ(ids.size(), 10u);
}

TEST(CloudClientOffline, UnreachableIsUnavailable) {
  int port;
  {
    ModelRegistry r;
    DatasetStore d;
    CloudServer s(r, d);
    port = s.start();
  }
  CloudClient c("http://127.0.0.1:" + std::to_string(port), {0.5, 0.5});
  EXPECT_EQ(kind_of([&] { c.list_models(); }), ErrorKind::Unavailable);
}

namespace {

struct EdgeRuntime {
  ManualClock clock{1000 * kNsPerSecond};
  mlrt::MlManager ml{clock};

  EdgeRuntime() { ml.set_feature_source("x", mlrt::FeatureSource::request()); }

  void label_cycles(std::int64_t from, std::int64_t to, const std::string& model = "cop") {
    for (std::int64_t c = from; c < to; ++c) {
      const mlrt::FeatureMap f{{"x", double(c)}};
      const auto p = ml.predict(model, f);
      ml.retain({c, "A"}, p, f);
      ml.record_label({c, "A"}, 0.5 + 1.1 * c);
    }
  }
};

}  // namespace

TEST_F(CloudHttp, SyncPullsOnlyNewerVersions) {
  EdgeRuntime edge;
  CloudSync sync(CloudClient(client->url()), edge.ml);
  EXPECT_TRUE(sync.poll_models().empty());
  client->put_model("cop", model_doc(1));
  auto got = sync.poll_models();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(edge.ml.active_version("cop"), 1);
  EXPECT_TRUE(sync.poll_models().empty());
  client->put_model("cop", model_doc(2, "uplink", 1));
  got = sync.poll_models();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(edge.ml.active_version("cop"), 2);
  EXPECT_EQ(edge.ml.predict("cop", {{"x", 1.0}}).value, 2.5);
}

TEST_F(CloudHttp, SyncUploadsLabelsOnce) {
  EdgeRuntime edge;
  client->put_model("cop", model_doc(1));
  CloudSync sync(CloudClient(client->url()), edge.ml, {{"cop"}, "uplink", 60, 7});
  sync.poll_models();
  edge.label_cycles(0, 20);
  auto r = sync.upload_labels();
  EXPECT_EQ(r.uploaded, 20u);
  EXPECT_EQ(edge.ml.pending_export(), 0u);
  EXPECT_EQ(datasets.size("uplink"), 20u);

  // Server stored a batch but the ack never reached the edge.
  edge.label_cycles(20, 25);
  auto batch = edge.ml.export_training_batch(100);
  client->upload("uplink", batch.ndjson());
  edge.ml.requeue(batch.batch_id);
  r = sync.upload_labels();
  EXPECT_EQ(r.uploaded, 0u);
  EXPECT_EQ(r.duplicates, 5u);
  EXPECT_EQ(datasets.size("uplink"), 25u);
  auto rows = datasets.fetch("uplink");
  EXPECT_EQ(rows.back().key.cycle_id, 24);
  EXPECT_DOUBLE_EQ(rows.back().label, 0.5 + 1.1 * 24);
}

TEST(CloudSyncOffline, UnreachableCloudKeepsTheQueue) {
  int port;
  {
    ModelRegistry r;
    DatasetStore d;
    CloudServer s(r, d);
    port = s.start();
  }
  EdgeRuntime edge;
  boost::PortableModel pm = boost::parse(model_doc(1));
  pm.metadata.name = "cop";
  edge.ml.deploy(pm);
  edge.ml.activate("cop", 1);
  edge.label_cycles(0, 3);
  CloudSync sync(CloudClient("http://127.0.0.1:" + std::to_string(port), {0.5, 0.5}), edge.ml);
  EXPECT_EQ(kind_of([&] { sync.upload_labels(); }), ErrorKind::Unavailable);
  EXPECT_EQ(edge.ml.pending_export(), 3u);
  const auto rep = sync.sync_once();
  ASSERT_TRUE(rep.error);
  EXPECT_EQ(edge.ml.pending_export(), 3u);
}

TEST_F(CloudHttp, BackgroundSyncRuns) {
  EdgeRuntime edge;
  client->put_model("cop", model_doc(1));
  CloudSync sync(CloudClient(client->url()), edge.ml, {{"cop"}, "uplink", 0.05, 100});
  sync.start();
  for (int i = 0; i < 100 && !edge.ml.active_version("cop"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ASSERT_EQ(edge.ml.active_version("cop"), 1);
  edge.label_cycles(0, 4);
  for (int i = 0; i < 100 && datasets.size("uplink") < 4; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  sync.stop();
  EXPECT_EQ(datasets.size("uplink"), 4u);
  ASSERT_TRUE(sync.last_report());
}
