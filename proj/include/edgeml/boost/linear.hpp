#pragma once

#include <span>
#include <string>
#include <vector>

#include "edgeml/boost/dataset.hpp"

namespace edgeml::boost {

/// Least-squares baseline y ≈ w·x + b.
struct LinearModel {
  std::vector<std::string> feature_names;
  std::vector<double> coefficients;
  double intercept = 0.0;
  /// Set when every row was identical and only the label mean was fitted.
  bool degenerate = false;

  double predict(std::span<const double> x) const;
};

inline constexpr double kRidgeLambda = 1e-9;

/// Ordinary least squares on centred features. When the centred design is
/// rank deficient (fewer rows than F + 1, collinear columns) a ridge term
/// kRidgeLambda·‖w‖² is added to the normal equations; the intercept is
/// never penalised.
LinearModel fit_linear(const Dataset& data);

}  // namespace edgeml::boost
