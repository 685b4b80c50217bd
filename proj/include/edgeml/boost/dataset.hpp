#pragma once

#include <span>
#include <string>
#include <vector>

namespace edgeml::boost {

/// Dense row-major feature matrix with one label per row.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> values;  // rows × feature_count, row-major
  std::vector<double> labels;

  std::size_t feature_count() const { return feature_names.size(); }
  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * feature_count(), feature_count()};
  }

  void add_row(std::span<const double> features, double label);

  /// Throws Error{Schema} when empty, ragged or holding non-finite entries.
  void validate() const;
};

}  // namespace edgeml::boost
