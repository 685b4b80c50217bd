#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace edgeml::cloud {

struct Lineage {
  std::string dataset_id;
  std::string run_id;
  std::optional<std::int64_t> parent_version;
  std::string trained_at;
};

struct RegistryEntry {
  std::string name;
  std::int64_t version = 0;
  /// Canonical PortableModel text; metadata.name and metadata.version agree
  /// with the entry.
  std::string document;
  Lineage lineage;
};

/// Versioned model store. Versions are assigned here, start at 1 and never
/// skip. With a directory every version lives in `<dir>/<name>/v{N}.json`.
class ModelRegistry {
 public:
  /// In-memory registry.
  ModelRegistry() = default;
  /// Loads every stored version below `dir`. Error{Io} when a name directory
  /// has a gap or an unreadable document.
  explicit ModelRegistry(std::filesystem::path dir);

  /// Validates the document, stamps name and the next version into its
  /// metadata and stores it. Lineage comes from the document metadata; an
  /// empty trained_at is filled with the current UTC time. Error{Schema},
  /// Error{Syntax} or Error{UnsupportedFormat} for an invalid document,
  /// Error{Domain} for an invalid name.
  std::int64_t put(std::string_view name, std::string_view document);

  /// Error{NotFound} for an unknown name or version.
  RegistryEntry get(std::string_view name, std::optional<std::int64_t> version = std::nullopt) const;
  /// Entries of one name in version order, documents omitted. Empty for an
  /// unknown name.
  std::vector<RegistryEntry> list(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  struct Family {
    std::mutex put_mu;  // serializes version assignment per name
    std::vector<RegistryEntry> versions;
  };
  Family& family(std::string_view name);
  const Family* find(std::string_view name) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<Family>, std::less<>> families_;
};

/// Letters, digits, '_', '-' and '.', not starting with '.'.
bool valid_name(std::string_view name);

void to_json(nlohmann::json& j, const Lineage& l);
/// Entry without its document.
nlohmann::json summary_json(const RegistryEntry& e);

}  // namespace edgeml::cloud
