#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgeml/boost/adaboost_r2.hpp"
#include "edgeml/boost/linear.hpp"

namespace edgeml::boost {

inline constexpr int kFormatVersion = 1;

/// Named feature values; models bind inputs by name, not by position.
using FeatureMap = std::map<std::string, double, std::less<>>;

struct ModelMetadata {
  std::string name;
  std::int64_t version = 1;
  std::string dataset_id;
  std::string run_id;
  std::optional<std::int64_t> parent_version;
  std::string trained_at;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

using ModelBody = std::variant<AdaBoostR2Model, LinearModel>;

/// The cross-component model document: a fitted model plus its lineage.
///
/// JSON layout (adaboost_r2):
///   {"format_version":1, "model_type":"adaboost_r2", "feature_names":[...],
///    "loss":"linear", "learners":[{"nodes":[{"f":0,"t":0.5,"l":1,"r":2,"v":null}, ...]}],
///    "log_weights":[...], "metadata":{...}}
/// linear models carry "coefficients" and "intercept" instead of
/// "loss"/"learners"/"log_weights".
struct PortableModel {
  int format_version = kFormatVersion;
  ModelBody body;
  ModelMetadata metadata;

  std::string_view model_type() const;
  const std::vector<std::string>& feature_names() const;

  /// Features in the model's own order.
  double predict(std::span<const double> row) const;
  /// Error{Schema} naming the first missing feature.
  double predict(const FeatureMap& features) const;
  std::vector<double> bind(const FeatureMap& features) const;
};

nlohmann::json to_document(const PortableModel& model);
/// Compact JSON; doubles use the shortest round-trip decimal form.
std::string serialize(const PortableModel& model);

/// Error{UnsupportedFormat} for malformed JSON, an unknown format_version or
/// model_type (the message carries the offending value), or a structurally
/// invalid payload.
PortableModel from_document(const nlohmann::json& doc);
PortableModel parse(std::string_view text);

}  // namespace edgeml::boost
