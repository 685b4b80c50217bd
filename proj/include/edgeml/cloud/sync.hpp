#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "edgeml/cloud/client.hpp"
#include "edgeml/mlrt/ml_manager.hpp"

namespace edgeml::cloud {

struct SyncOptions {
  std::vector<std::string> models{"cop"};
  std::string dataset_id = "uplink";
  double poll_interval_s = 60.0;
  std::size_t upload_batch = 500;
  /// Activate a pulled version right after deploying it.
  bool activate = true;
};

struct SyncReport {
  std::vector<mlrt::ModelRecord> deployed;
  std::size_t uploaded = 0;
  std::size_t duplicates = 0;
  std::size_t rejected = 0;
  std::optional<std::string> error;
};

/// Edge side of the cloud loop: pulls registry versions newer than anything
/// the runtime holds and ships labelled samples to the dataset store.
class CloudSync {
 public:
  CloudSync(CloudClient client, mlrt::MlManager& ml, SyncOptions options = {});
  ~CloudSync();

  CloudSync(const CloudSync&) = delete;
  CloudSync& operator=(const CloudSync&) = delete;

  /// Deploys (and optionally activates) the registry's latest version of
  /// every configured model when it is newer than the newest local version.
  /// Names unknown to the registry are skipped.
  std::vector<mlrt::ModelRecord> poll_models();
  /// Uploads export batches until the queue is empty. A batch is acknowledged
  /// only after the server answered; on failure it is requeued and the error
  /// rethrown.
  SyncReport upload_labels();
  /// poll_models then upload_labels; errors are reported, not thrown.
  SyncReport sync_once();

  /// Runs sync_once every poll_interval_s on a background thread.
  void start();
  void stop();
  std::optional<SyncReport> last_report() const;

 private:
  CloudClient client_;
  mlrt::MlManager& ml_;
  SyncOptions options_;
  std::thread thread_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::optional<SyncReport> last_;
};

}  // namespace edgeml::cloud
