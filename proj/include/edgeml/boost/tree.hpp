#pragma once

#include <optional>
#include <span>
#include <vector>

#include "edgeml/boost/dataset.hpp"

namespace edgeml::boost {

/// Either a split (feature, threshold, left, right) or a leaf (value).
/// Samples go left iff x[feature] <= threshold.
struct TreeNode {
  std::optional<int> feature;
  std::optional<double> threshold;
  std::optional<int> left;
  std::optional<int> right;
  std::optional<double> leaf_value;

  bool is_leaf() const { return leaf_value.has_value(); }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary regression tree stored as a flat node array, node 0 is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t depth() const;
  /// Throws Error{UnsupportedFormat} unless every node is a well-formed leaf
  /// or split, child indices are in range and the graph is a tree.
  void validate(std::size_t feature_count) const;

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

/// Split errors closer than this fraction of the node's own weighted SSE
/// are treated as equal, so ties do not depend on summation order.
inline constexpr double kSplitTieTolerance = 1e-12;

/// Greedy weighted least-squares tree. Each split minimises the summed
/// weighted squared error of both children; leaves hold the weighted mean.
/// Ties go to the lowest feature index, then the lowest threshold, where the
/// threshold is the largest feature value sent left. Zero-weight samples take
/// no part in the fit. Growth stops at max_depth, on single-sample or
/// constant-label nodes, and when no feature separates the samples.
RegressionTree fit_tree_weighted(const Dataset& data, std::span<const double> sample_weights, int max_depth);

}  // namespace edgeml::boost
