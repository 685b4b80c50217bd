#include "edgeml/mlrt/ml_manager.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/tsdb/store.hpp"

namespace edgeml::mlrt {

using nlohmann::json;

std::string_view to_string(ModelStatus s) {
  switch (s) {
    case ModelStatus::Staged: return "staged";
    case ModelStatus::Active: return "active";
    case ModelStatus::Retired: return "retired";
  }
  return "staged";
}

std::string SampleKey::str() const {
  return item.empty() ? std::to_string(cycle_id) : std::to_string(cycle_id) + ":" + item;
}

json to_json_row(const LabeledSample& s) {
  json features = json::object();
  for (const auto& [k, v] : s.features) features[k] = v;
  return {{"sample_id", s.key.str()},
          {"cycle_id", s.key.cycle_id},
          {"item", s.key.item},
          {"model", s.model_name},
          {"model_version", s.model_version},
          {"features", std::move(features)},
          {"predicted", s.predicted},
          {"label", s.label},
          {"labeled_at_ns", s.labeled_at_ns}};
}

LabeledSample labeled_sample_from_json(const json& row) {
  try {
    if (!row.is_object()) fail(ErrorKind::Schema, "sample row must be an object");
    LabeledSample s;
    s.key.cycle_id = row.at("cycle_id").get<std::int64_t>();
    s.key.item = row.value("item", std::string{});
    s.model_name = row.value("model", std::string{});
    s.model_version = row.value("model_version", std::int64_t{0});
    for (const auto& [k, v] : row.at("features").items()) s.features[k] = v.get<double>();
    s.predicted = row.value("predicted", 0.0);
    s.label = row.at("label").get<double>();
    s.labeled_at_ns = row.value("labeled_at_ns", TimestampNs{0});
    if (!std::isfinite(s.label)) fail(ErrorKind::Schema, "label must be finite");
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed sample row: ") + e.what());
  }
}

std::string ExportBatch::ndjson() const {
  std::string out;
  for (const auto& s : samples) out += to_json_row(s).dump() + "\n";
  return out;
}

MlManager::MlManager(const Clock& clock, tsdb::Store* store, MlOptions options)
    : clock_(clock), store_(store), options_(options) {
  if (options_.drift_window == 0) fail(ErrorKind::Domain, "drift window must be > 0");
  if (store_) ingest_thread_ = std::thread([this] { ingest_loop(); });
}

MlManager::~MlManager() {
  if (ingest_thread_.joinable()) {
    {
      std::lock_guard lock(drain_mu_);
      stopping_ = true;
    }
    ingest_cv_.notify_all();
    ingest_thread_.join();
  }
}

void MlManager::set_feature_source(const std::string& feature, FeatureSource source) {
  const bool series = source.kind == FeatureSource::Kind::Series;
  const std::string key = source.series;
  {
    std::unique_lock lock(models_mu_);
    sources_[feature] = std::move(source);
  }
  if (series) watch_series(key);
}

std::optional<FeatureSource> MlManager::source_for(const std::string& feature) const {
  if (auto it = sources_.find(feature); it != sources_.end()) return it->second;
  if (store_ && store_->point_count(feature) > 0) return FeatureSource::from_series(feature);
  return std::nullopt;
}

void MlManager::watch_series(const std::string& series) {
  if (!store_) return;
  std::lock_guard lock(drain_mu_);
  if (streams_.count(series)) return;
  streams_[series] = store_->subscribe(series);
  // Prime with what is already stored; the subscription covers later appends.
  if (auto p = store_->latest(series)) {
    std::lock_guard cache_lock(cache_mu_);
    auto& slot = cache_[series];
    if (p->timestamp_ns >= slot.ts) slot = {p->value, p->timestamp_ns};
  }
}

void MlManager::drain_streams() {
  // Caller holds drain_mu_.
  for (auto& [series, stream] : streams_) {
    std::vector<TimePoint> pts;
    try {
      pts = stream->drain();
    } catch (const Error&) {
      // Lagging subscriber: start over from the store's latest value.
      stream = store_->subscribe(series);
      if (auto p = store_->latest(series)) pts.push_back(*p);
    }
    if (pts.empty()) continue;
    std::lock_guard cache_lock(cache_mu_);
    auto& slot = cache_.try_emplace(series, CachedValue{0.0, std::numeric_limits<TimestampNs>::min()}).first->second;
    for (const auto& p : pts)
      if (p.timestamp_ns >= slot.ts) slot = {p.value, p.timestamp_ns};
  }
}

void MlManager::ingest_loop() {
  std::unique_lock lock(drain_mu_);
  while (!stopping_) {
    drain_streams();
    ingest_cv_.wait_for(lock, std::chrono::milliseconds(10), [&] { return stopping_; });
  }
}

void MlManager::sync() {
  if (!store_) return;
  store_->wait_dispatched();
  std::lock_guard lock(drain_mu_);
  drain_streams();
}

ModelRecord MlManager::deploy_document(std::string_view json_text) { return deploy(boost::parse(json_text)); }

ModelRecord MlManager::deploy(const PortableModel& model) {
  const std::string& name = model.metadata.name;
  const std::int64_t version = model.metadata.version;
  if (name.empty()) fail(ErrorKind::Schema, "model metadata lacks a name");
  if (version < 1) fail(ErrorKind::Schema, "model version must be >= 1");

  std::vector<std::string> series;
  {
    std::unique_lock lock(models_mu_);
    std::vector<std::string> missing;
    for (const auto& f : model.feature_names()) {
      auto src = source_for(f);
      if (!src) missing.push_back(f);
      else if (src->kind == FeatureSource::Kind::Series) series.push_back(src->series);
    }
    if (!missing.empty()) {
      std::string msg = "no source for feature(s):";
      for (const auto& m : missing) msg += " '" + m + "'";
      fail(ErrorKind::Schema, msg);
    }

    auto& fam = families_[name];
    if (!fam) {
      fam = std::make_unique<Family>();
      fam->retrain_window = std::make_unique<boost::RetrainWindow>(model.feature_names(), options_.retrain_window);
      fam->fresh.feature_names = model.feature_names();
      fam->drift.capacity = options_.drift_window;
      fam->drift.threshold = options_.drift_threshold;
    }
    if (auto it = fam->versions.find(version); it != fam->versions.end()) {
      if (boost::serialize(*it->second.portable) != boost::serialize(model))
        fail(ErrorKind::Conflict, name + " v" + std::to_string(version) + " already deployed with different content");
      return it->second;
    }
    if (!fam->versions.empty() && version < fam->versions.rbegin()->first)
      fail(ErrorKind::Conflict, "version " + std::to_string(version) + " is older than deployed v" +
                                    std::to_string(fam->versions.rbegin()->first));
    if (model.feature_names() != fam->fresh.feature_names)
      fail(ErrorKind::Schema, "feature names differ from earlier versions of '" + name + "'");

    ModelRecord rec;
    rec.name = name;
    rec.version = version;
    rec.portable = std::make_shared<const PortableModel>(model);
    rec.required_features = model.feature_names();
    rec.status = ModelStatus::Staged;
    fam->versions.emplace(version, rec);
    lock.unlock();
    for (const auto& s : series) watch_series(s);
    return rec;
  }
}

std::optional<std::int64_t> MlManager::activate(std::string_view name, std::int64_t version) {
  std::unique_lock lock(models_mu_);
  auto fit = families_.find(name);
  if (fit == families_.end()) fail(ErrorKind::NotFound, "unknown model '" + std::string(name) + "'");
  Family& fam = *fit->second;
  auto vit = fam.versions.find(version);
  if (vit == fam.versions.end())
    fail(ErrorKind::NotFound, "unknown version " + std::to_string(version) + " of '" + std::string(name) + "'");

  std::optional<std::int64_t> previous;
  {
    std::lock_guard active_lock(fam.active_mu);
    if (fam.active) previous = fam.active->version;
    if (previous == version) return previous;
    fam.active = std::make_shared<const Active>(Active{version, vit->second.portable});
  }
  if (previous) fam.versions.at(*previous).status = ModelStatus::Retired;
  vit->second.status = ModelStatus::Active;
  return previous;
}

std::int64_t MlManager::rollback(std::string_view name) {
  std::int64_t target;
  {
    std::shared_lock lock(models_mu_);
    auto fit = families_.find(name);
    if (fit == families_.end()) fail(ErrorKind::NotFound, "unknown model '" + std::string(name) + "'");
    auto active = active_of(name);
    if (!active) fail(ErrorKind::NotFound, "no active version of '" + std::string(name) + "'");
    const auto& versions = fit->second->versions;
    auto it = versions.lower_bound(active->version);
    if (it == versions.begin()) fail(ErrorKind::NotFound, "no previous version");
    target = std::prev(it)->first;
  }
  activate(name, target);
  return target;
}

std::vector<ModelRecord> MlManager::models() const {
  std::shared_lock lock(models_mu_);
  std::vector<ModelRecord> out;
  for (const auto& [name, fam] : families_)
    for (const auto& [v, rec] : fam->versions) out.push_back(rec);
  return out;
}

std::shared_ptr<const MlManager::Active> MlManager::active_of(std::string_view name) const {
  // Caller holds models_mu_ (shared is enough).
  auto it = families_.find(name);
  if (it == families_.end()) return nullptr;
  std::lock_guard lock(it->second->active_mu);
  return it->second->active;
}

std::optional<std::int64_t> MlManager::active_version(std::string_view name) const {
  std::shared_lock lock(models_mu_);
  auto a = active_of(name);
  if (!a) return std::nullopt;
  return a->version;
}

FeatureMap MlManager::assemble(const PortableModel& model, const FeatureMap& supplied) const {
  FeatureMap out;
  const TimestampNs now = clock_.now_ns();
  for (const auto& f : model.feature_names()) {
    if (auto it = supplied.find(f); it != supplied.end()) {
      if (!std::isfinite(it->second)) fail(ErrorKind::Schema, "feature '" + f + "' is not finite");
      out[f] = it->second;
      continue;
    }
    std::optional<FeatureSource> src;
    {
      std::shared_lock lock(models_mu_);
      src = source_for(f);
    }
    if (!src || src->kind == FeatureSource::Kind::Request)
      fail(ErrorKind::Schema, "feature '" + f + "' must be supplied with the request");
    if (src->kind == FeatureSource::Kind::Derived) {
      out[f] = src->derive(now);
      continue;
    }
    std::optional<CachedValue> cached;
    {
      std::lock_guard lock(cache_mu_);
      if (auto it = cache_.find(src->series); it != cache_.end()) cached = it->second;
    }
    if (!cached && store_)
      if (auto p = store_->latest(src->series)) cached = CachedValue{p->value, p->timestamp_ns};
    if (!cached) fail(ErrorKind::Unavailable, "no value yet for series '" + src->series + "'");
    if (now - cached->ts > options_.staleness_ns)
      fail(ErrorKind::StaleData, "feature '" + f + "' is " + std::to_string(ns_to_seconds(now - cached->ts)) +
                                     " s old (bound " + std::to_string(ns_to_seconds(options_.staleness_ns)) + " s)");
    out[f] = cached->value;
  }
  return out;
}

Prediction MlManager::predict(std::string_view name, const FeatureMap& supplied) const {
  std::shared_ptr<const Active> active;
  {
    std::shared_lock lock(models_mu_);
    active = active_of(name);
  }
  if (!active) fail(ErrorKind::Unavailable, "no active version of '" + std::string(name) + "'");
  const FeatureMap features = assemble(*active->model, supplied);
  return {active->model->predict(features), active->version, std::string(name)};
}

EnsemblePrediction MlManager::predict_ensemble(const std::vector<std::string>& names, const FeatureMap& supplied) const {
  EnsemblePrediction out;
  for (const auto& n : names) {
    try {
      out.members.push_back(predict(n, supplied));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Unavailable) throw;
    }
  }
  if (out.members.empty()) fail(ErrorKind::Unavailable, "no ensemble member is available");
  std::vector<double> values;
  for (const auto& m : out.members) values.push_back(m.value);
  std::sort(values.begin(), values.end());
  out.value = values[(values.size() - 1) / 2];
  return out;
}

void MlManager::retain(const SampleKey& key, const Prediction& prediction, const FeatureMap& features) {
  std::lock_guard lock(labels_mu_);
  if (!retained_.emplace(key, Retained{prediction, features, false}).second)
    fail(ErrorKind::Conflict, "features for sample " + key.str() + " already retained");
}

void MlManager::update_drift(Family& fam, double predicted, double label) {
  fam.drift_window.push_back(std::abs(predicted - label) / label);
  while (fam.drift_window.size() > options_.drift_window) fam.drift_window.pop_front();
  fam.drift.window.assign(fam.drift_window.begin(), fam.drift_window.end());
  fam.drift.mean = std::accumulate(fam.drift.window.begin(), fam.drift.window.end(), 0.0) /
                   static_cast<double>(fam.drift.window.size());
  fam.drift.alarm = fam.drift.window.size() == options_.drift_window && fam.drift.mean > options_.drift_threshold;
}

LabeledSample MlManager::record_label(const SampleKey& key, double label) {
  if (!std::isfinite(label) || label <= 0.0) fail(ErrorKind::Domain, "label must be finite and > 0");
  LabeledSample sample;
  bool retrain = false;
  {
    std::shared_lock models_lock(models_mu_);
    std::lock_guard lock(labels_mu_);
    auto it = retained_.find(key);
    if (it == retained_.end()) fail(ErrorKind::NotFound, "no retained features for sample " + key.str());
    if (it->second.labeled) fail(ErrorKind::Conflict, "sample " + key.str() + " already labeled");
    const Retained& r = it->second;
    sample.key = key;
    sample.model_name = r.prediction.model_name;
    sample.model_version = r.prediction.version;
    sample.features = r.features;
    sample.predicted = r.prediction.value;
    sample.label = label;
    sample.labeled_at_ns = clock_.now_ns();

    auto fit = families_.find(sample.model_name);
    if (fit != families_.end()) {
      Family& fam = *fit->second;
      std::vector<double> row;
      for (const auto& f : fam.fresh.feature_names) {
        auto v = sample.features.find(f);
        if (v == sample.features.end()) fail(ErrorKind::Schema, "retained features lack '" + f + "'");
        row.push_back(v->second);
      }
      fam.fresh.add_row(row, label);
      update_drift(fam, sample.predicted, label);
      retrain = options_.auto_retrain && fam.drift.alarm;
    }
    it->second.labeled = true;
    export_queue_.push_back(sample);
  }
  if (retrain) {
    auto rec = retrain_local(sample.model_name);
    activate(rec.name, rec.version);
    std::shared_lock models_lock(models_mu_);
    std::lock_guard lock(labels_mu_);
    Family& fam = *families_.find(sample.model_name)->second;
    fam.drift_window.clear();
    fam.drift = DriftState{{}, options_.drift_window, 0.0, options_.drift_threshold, false};
  }
  return sample;
}

DriftState MlManager::drift_status(std::string_view name) const {
  std::shared_lock models_lock(models_mu_);
  std::lock_guard lock(labels_mu_);
  auto it = families_.find(name);
  if (it == families_.end()) return DriftState{{}, options_.drift_window, 0.0, options_.drift_threshold, false};
  return it->second->drift;
}

ExportBatch MlManager::export_training_batch(std::size_t max_n) {
  std::lock_guard lock(labels_mu_);
  ExportBatch batch;
  batch.batch_id = next_batch_id_++;
  const std::size_t n = std::min(max_n, export_queue_.size());
  batch.samples.assign(export_queue_.begin(), export_queue_.begin() + static_cast<std::ptrdiff_t>(n));
  export_queue_.erase(export_queue_.begin(), export_queue_.begin() + static_cast<std::ptrdiff_t>(n));
  if (n > 0) in_flight_[batch.batch_id] = batch.samples;
  return batch;
}

void MlManager::acknowledge(std::uint64_t batch_id) {
  std::lock_guard lock(labels_mu_);
  in_flight_.erase(batch_id);
}

void MlManager::requeue(std::uint64_t batch_id) {
  std::lock_guard lock(labels_mu_);
  auto it = in_flight_.find(batch_id);
  if (it == in_flight_.end()) return;
  export_queue_.insert(export_queue_.begin(), it->second.begin(), it->second.end());
  in_flight_.erase(it);
}

std::size_t MlManager::pending_export() const {
  std::lock_guard lock(labels_mu_);
  std::size_t n = export_queue_.size();
  for (const auto& [id, s] : in_flight_) n += s.size();
  return n;
}

ModelRecord MlManager::retrain_local(std::string_view name, std::optional<int> extra_rounds) {
  PortableModel next;
  {
    std::shared_lock models_lock(models_mu_);
    std::lock_guard lock(labels_mu_);
    auto fit = families_.find(name);
    if (fit == families_.end()) fail(ErrorKind::NotFound, "unknown model '" + std::string(name) + "'");
    Family& fam = *fit->second;
    auto active = active_of(name);
    if (!active) fail(ErrorKind::Unavailable, "no active version of '" + std::string(name) + "'");
    const auto* boosted = std::get_if<boost::AdaBoostR2Model>(&active->model->body);
    if (!boosted) fail(ErrorKind::UnsupportedFormat, "local retraining needs an adaboost_r2 model");
    if (fam.fresh.size() == 0) fail(ErrorKind::Domain, "no new labeled samples since the last retrain");

    next.body = boost::local_update(*boosted, *fam.retrain_window, fam.fresh, extra_rounds.value_or(options_.retrain_rounds),
                                    options_.retrain_max_depth);
    fam.fresh.values.clear();
    fam.fresh.labels.clear();
    next.metadata = active->model->metadata;
    next.metadata.version = fam.versions.rbegin()->first + 1;
    next.metadata.parent_version = active->version;
    next.metadata.dataset_id = "local";
    next.metadata.run_id = "local-" + std::to_string(next.metadata.version);
    next.metadata.trained_at = utc_now_iso();
  }
  return deploy(next);
}

}  // namespace edgeml::mlrt
