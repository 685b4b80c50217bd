#include "edgeml/cloud/sync.hpp"

#include <chrono>

#include "edgeml/common/error.hpp"

namespace edgeml::cloud {

CloudSync::CloudSync(CloudClient client, mlrt::MlManager& ml, SyncOptions options)
    : client_(std::move(client)), ml_(ml), options_(std::move(options)) {
  if (!(options_.poll_interval_s > 0.0)) fail(ErrorKind::Domain, "poll_interval_s must be > 0");
  if (options_.upload_batch == 0) fail(ErrorKind::Domain, "upload_batch must be > 0");
}

CloudSync::~CloudSync() { stop(); }

std::vector<mlrt::ModelRecord> CloudSync::poll_models() {
  std::vector<mlrt::ModelRecord> deployed;
  for (const auto& name : options_.models) {
    std::int64_t newest_local = 0;
    for (const auto& m : ml_.models())
      if (m.name == name) newest_local = std::max(newest_local, m.version);
    RegistryEntry latest;
    try {
      latest = client_.get_model(name);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NotFound) continue;
      throw;
    }
    if (latest.version <= newest_local) continue;
    auto rec = ml_.deploy_document(latest.document);
    if (options_.activate) {
      ml_.activate(rec.name, rec.version);
      rec.status = mlrt::ModelStatus::Active;
    }
    deployed.push_back(std::move(rec));
  }
  return deployed;
}

SyncReport CloudSync::upload_labels() {
  SyncReport report;
  while (ml_.pending_export() > 0) {
    mlrt::ExportBatch batch = ml_.export_training_batch(options_.upload_batch);
    if (batch.samples.empty()) break;
    UploadResult r;
    try {
      r = client_.upload(options_.dataset_id, batch.ndjson());
    } catch (...) {
      ml_.requeue(batch.batch_id);
      throw;
    }
    ml_.acknowledge(batch.batch_id);
    report.uploaded += r.accepted;
    report.duplicates += r.duplicates;
    report.rejected += r.rejected;
  }
  return report;
}

SyncReport CloudSync::sync_once() {
  SyncReport report;
  try {
    report.deployed = poll_models();
    SyncReport up = upload_labels();
    report.uploaded = up.uploaded;
    report.duplicates = up.duplicates;
    report.rejected = up.rejected;
  } catch (const std::exception& e) {
    report.error = e.what();
  }
  std::lock_guard lock(mu_);
  last_ = report;
  return report;
}

void CloudSync::start() {
  if (thread_.joinable()) return;
  {
    std::lock_guard lock(mu_);
    stop_ = false;
  }
  thread_ = std::thread([this] {
    const auto interval = std::chrono::duration<double>(options_.poll_interval_s);
    for (;;) {
      sync_once();
      std::unique_lock lock(mu_);
      if (cv_.wait_for(lock, interval, [this] { return stop_; })) return;
    }
  });
}

void CloudSync::stop() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::optional<SyncReport> CloudSync::last_report() const {
  std::lock_guard lock(mu_);
  return last_;
}

}  // namespace edgeml::cloud
