#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/mlrt/ml_manager.hpp"

namespace edgeml::cloud {

struct UploadResult {
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::size_t rejected = 0;
  /// First few rejection messages, "line N: ...".
  std::vector<std::string> errors;
};

struct CycleRange {
  std::optional<std::int64_t> from_cycle;  // inclusive
  std::optional<std::int64_t> to_cycle;    // inclusive
};

/// Labelled samples per dataset, deduplicated by sample id. With a directory
/// each dataset is an append-only `<dir>/<dataset_id>.ndjson`.
class DatasetStore {
 public:
  DatasetStore() = default;
  explicit DatasetStore(std::filesystem::path dir);

  /// Parses NDJSON rows; blank lines are skipped. Rows whose sample id was
  /// already stored count as duplicates and change nothing. Error{Domain} for
  /// an invalid dataset id.
  UploadResult upload(std::string_view dataset_id, std::string_view ndjson);
  UploadResult upload(std::string_view dataset_id, const std::vector<mlrt::LabeledSample>& samples);

  /// Samples ordered by (cycle_id, item). Error{NotFound} for an unknown
  /// dataset.
  std::vector<mlrt::LabeledSample> fetch(std::string_view dataset_id, const CycleRange& range = {}) const;
  std::string fetch_ndjson(std::string_view dataset_id, const CycleRange& range = {}) const;

  std::vector<std::string> datasets() const;
  std::size_t size(std::string_view dataset_id) const;

 private:
  struct Dataset {
    std::map<mlrt::SampleKey, std::string> rows;  // canonical NDJSON row per key
  };
  UploadResult add(std::string_view dataset_id, const std::vector<std::pair<std::size_t, std::string>>& lines,
                   bool persist);

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Dataset, std::less<>> data_;
};

void to_json(nlohmann::json& j, const UploadResult& r);

}  // namespace edgeml::cloud
