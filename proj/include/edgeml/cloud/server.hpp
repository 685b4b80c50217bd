#pragma once

#include <memory>
#include <string>

#include "edgeml/cloud/dataset_store.hpp"
#include "edgeml/cloud/registry.hpp"

namespace edgeml::cloud {

/// HTTP front of the registry and the dataset store.
///
///   PUT  /models/{name}/versions          body: document -> {"version": N}
///   GET  /models/{name}/versions/latest   body: stored document
///   GET  /models/{name}/versions/{v}      body: stored document
///   GET  /models/{name}/versions          {"name", "versions": [{version, lineage}]}
///   GET  /models                          {"names": [...]}
///   POST /data/{dataset_id}               NDJSON body -> {accepted, duplicates, rejected, errors}
///   GET  /data/{dataset_id}?from_cycle=&to_cycle=   NDJSON
///
/// Document responses carry X-Model-Name and X-Model-Version headers.
class CloudServer {
 public:
  CloudServer(ModelRegistry& registry, DatasetStore& datasets);
  ~CloudServer();

  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port. Error{Unavailable} when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgeml::cloud
