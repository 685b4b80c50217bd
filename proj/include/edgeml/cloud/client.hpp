#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgeml/cloud/dataset_store.hpp"
#include "edgeml/cloud/registry.hpp"

namespace edgeml::cloud {

struct ClientOptions {
  double connect_timeout_s = 2.0;
  double read_timeout_s = 30.0;
};

/// Blocking client for CloudServer. Error{Unavailable} when the server cannot
/// be reached; error responses are raised with the kind the server reported.
class CloudClient {
 public:
  explicit CloudClient(std::string_view url, ClientOptions options = {});
  ~CloudClient();

  CloudClient(CloudClient&&) noexcept;
  CloudClient& operator=(CloudClient&&) noexcept;

  std::int64_t put_model(std::string_view name, std::string_view document);
  /// Latest when `version` is empty. The entry's lineage is read from the
  /// document metadata.
  RegistryEntry get_model(std::string_view name, std::optional<std::int64_t> version = std::nullopt);
  std::vector<RegistryEntry> list_versions(std::string_view name);
  std::vector<std::string> list_models();

  UploadResult upload(std::string_view dataset_id, std::string_view ndjson);
  std::string fetch(std::string_view dataset_id, const CycleRange& range = {});

  const std::string& url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgeml::cloud
