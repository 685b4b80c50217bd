#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/boost/adaboost_r2.hpp"
#include "edgeml/boost/portable.hpp"
#include "edgeml/common/clock.hpp"
#include "edgeml/common/fanout.hpp"
#include "edgeml/common/time_point.hpp"

namespace edgeml::tsdb {
class Store;
}

namespace edgeml::mlrt {

using boost::FeatureMap;
using boost::PortableModel;

enum class ModelStatus { Staged, Active, Retired };
std::string_view to_string(ModelStatus s);

struct ModelRecord {
  std::string name;
  std::int64_t version = 0;
  std::shared_ptr<const PortableModel> portable;
  std::vector<std::string> required_features;
  ModelStatus status = ModelStatus::Staged;
};

/// Where a feature value comes from when the caller does not supply it.
struct FeatureSource {
  enum class Kind { Series, Derived, Request };
  Kind kind = Kind::Request;
  std::string series;                            // Series: store key
  std::function<double(TimestampNs)> derive;     // Derived: evaluated at "now"

  static FeatureSource from_series(std::string key) { return {Kind::Series, std::move(key), {}}; }
  static FeatureSource derived(std::function<double(TimestampNs)> fn) { return {Kind::Derived, {}, std::move(fn)}; }
  static FeatureSource request() { return {Kind::Request, {}, {}}; }
};

struct Prediction {
  double value = 0.0;
  std::int64_t version = 0;
  std::string model_name;
};

struct EnsemblePrediction {
  double value = 0.0;
  std::vector<Prediction> members;
};

/// Identifies one retained feature vector: a sequencing cycle and, when a
/// cycle yields several labels, the item within it (e.g. a chiller id).
struct SampleKey {
  std::int64_t cycle_id = 0;
  std::string item;

  auto operator<=>(const SampleKey&) const = default;
  std::string str() const;
};

struct LabeledSample {
  SampleKey key;
  std::string model_name;
  std::int64_t model_version = 0;
  FeatureMap features;
  double predicted = 0.0;
  double label = 0.0;
  TimestampNs labeled_at_ns = 0;
};

nlohmann::json to_json_row(const LabeledSample& s);
/// Error{Schema} when a field is missing or of the wrong type.
LabeledSample labeled_sample_from_json(const nlohmann::json& row);

struct DriftState {
  std::vector<double> window;  // relative absolute errors, oldest first
  std::size_t capacity = 0;
  double mean = 0.0;
  double threshold = 0.0;
  bool alarm = false;
};

struct ExportBatch {
  std::uint64_t batch_id = 0;
  std::vector<LabeledSample> samples;
  std::string ndjson() const;
};

struct MlOptions {
  TimestampNs staleness_ns = 60 * kNsPerSecond;
  std::size_t drift_window = 50;
  double drift_threshold = 0.15;
  std::size_t retrain_window = boost::RetrainWindow::kDefaultCapacity;
  int retrain_rounds = 10;
  int retrain_max_depth = 3;
  /// Retrain and activate automatically when a model's drift alarm trips.
  bool auto_retrain = false;
};

/// Hosts versioned models, serves predictions, and tracks labels, drift and
/// the uplink queue.
class MlManager {
 public:
  MlManager(const Clock& clock, tsdb::Store* store = nullptr, MlOptions options = {});
  ~MlManager();

  MlManager(const MlManager&) = delete;
  MlManager& operator=(const MlManager&) = delete;

  /// Declares how a feature name is obtained during auto-assembly. A feature
  /// with no declared source resolves to the store series of the same name
  /// when that series exists.
  void set_feature_source(const std::string& feature, FeatureSource source);

  /// Stages metadata.name / metadata.version. Error{Schema} listing every
  /// feature without a source; Error{Conflict} for a different document under
  /// an existing version or a version below the newest one. Redeploying an
  /// identical document returns the existing record.
  ModelRecord deploy(const PortableModel& model);
  ModelRecord deploy_document(std::string_view json_text);

  /// Atomically switches the served version; returns the previously active
  /// version. Retired versions may be reactivated (rollback).
  std::optional<std::int64_t> activate(std::string_view name, std::int64_t version);
  /// Re-activates the newest version older than the active one.
  /// Error{NotFound} "no previous version" when there is none.
  std::int64_t rollback(std::string_view name);

  std::vector<ModelRecord> models() const;
  std::optional<std::int64_t> active_version(std::string_view name) const;

  /// Features not supplied are assembled from their sources. Error{Unavailable}
  /// without an active version, Error{StaleData} when a series value is older
  /// than the staleness bound, Error{Schema} for a request-only feature that
  /// was not supplied.
  Prediction predict(std::string_view name, const FeatureMap& supplied = {}) const;
  /// Median of the available members (lower middle for an even count).
  EnsemblePrediction predict_ensemble(const std::vector<std::string>& names, const FeatureMap& supplied = {}) const;

  /// Keeps the feature vector and prediction a later label will refer to.
  /// Error{Conflict} if the key was already retained.
  void retain(const SampleKey& key, const Prediction& prediction, const FeatureMap& features);
  /// Error{NotFound} for an unknown key, Error{Conflict} for a second label,
  /// Error{Domain} for a non-finite or non-positive label.
  LabeledSample record_label(const SampleKey& key, double label);
  DriftState drift_status(std::string_view name) const;

  /// Moves up to max_n oldest queued samples in flight. They leave the queue
  /// for good on acknowledge(); requeue() puts them back at the front.
  ExportBatch export_training_batch(std::size_t max_n);
  void acknowledge(std::uint64_t batch_id);
  void requeue(std::uint64_t batch_id);
  std::size_t pending_export() const;

  /// Appends boosting rounds trained on the labels recorded since the last
  /// retrain and stages the result as the next version (parent = active).
  /// Error{Domain} when there are no new labels; Error{UnsupportedFormat} for
  /// non-boosted models.
  ModelRecord retrain_local(std::string_view name, std::optional<int> extra_rounds = std::nullopt);

  /// Blocks until every appended point has reached the feature cache.
  void sync();

  const MlOptions& options() const { return options_; }

 private:
  struct Active {
    std::int64_t version;
    std::shared_ptr<const PortableModel> model;
  };
  struct Family {
    std::map<std::int64_t, ModelRecord> versions;
    mutable std::mutex active_mu;
    std::shared_ptr<const Active> active;
    DriftState drift;
    std::deque<double> drift_window;
    std::unique_ptr<boost::RetrainWindow> retrain_window;
    boost::Dataset fresh;  // labels since the last retrain
  };
  struct Retained {
    Prediction prediction;
    FeatureMap features;
    bool labeled = false;
  };
  struct CachedValue {
    double value;
    TimestampNs ts;
  };

  std::shared_ptr<const Active> active_of(std::string_view name) const;
  std::optional<FeatureSource> source_for(const std::string& feature) const;
  FeatureMap assemble(const PortableModel& model, const FeatureMap& supplied) const;
  void watch_series(const std::string& series);
  void ingest_loop();
  void drain_streams();
  void update_drift(Family& fam, double predicted, double label);

  const Clock& clock_;
  tsdb::Store* store_;
  MlOptions options_;

  mutable std::shared_mutex models_mu_;
  std::map<std::string, std::unique_ptr<Family>, std::less<>> families_;
  std::map<std::string, FeatureSource> sources_;

  // Feature cache fed by store subscriptions.
  mutable std::mutex cache_mu_;
  std::map<std::string, CachedValue, std::less<>> cache_;
  std::map<std::string, std::shared_ptr<Stream<TimePoint>>> streams_;
  std::mutex drain_mu_;
  std::thread ingest_thread_;
  bool stopping_ = false;
  std::condition_variable ingest_cv_;

  // Labels and uplink.
  mutable std::mutex labels_mu_;
  std::map<SampleKey, Retained> retained_;
  std::deque<LabeledSample> export_queue_;
  std::map<std::uint64_t, std::vector<LabeledSample>> in_flight_;
  std::uint64_t next_batch_id_ = 1;
};

}  // namespace edgeml::mlrt
