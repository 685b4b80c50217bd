#include "edgeml/boost/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "edgeml/common/error.hpp"

namespace edgeml::boost {

void Dataset::add_row(std::span<const double> features, double label) {
  if (features.size() != feature_count())
    fail(ErrorKind::Schema, "row has " + std::to_string(features.size()) + " features, expected " +
                                std::to_string(feature_count()));
  values.insert(values.end(), features.begin(), features.end());
  labels.push_back(label);
}

void Dataset::validate() const {
  if (labels.empty()) fail(ErrorKind::Schema, "dataset is empty");
  if (values.size() != labels.size() * feature_count()) fail(ErrorKind::Schema, "dataset rows are ragged");
  for (double v : values)
    if (!std::isfinite(v)) fail(ErrorKind::Schema, "dataset holds a non-finite feature value");
  for (double v : labels)
    if (!std::isfinite(v)) fail(ErrorKind::Schema, "dataset holds a non-finite label");
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t at = 0;
  for (std::size_t hops = 0; hops <= nodes.size(); ++hops) {
    const TreeNode& n = nodes.at(at);
    if (n.leaf_value) return *n.leaf_value;
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(*n.feature)] <= *n.threshold ? *n.left : *n.right);
  }
  fail(ErrorKind::UnsupportedFormat, "tree contains a cycle");
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = nodes[i];
    if (!n.is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(*n.left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(*n.right), d + 1);
    }
  }
  return deepest;
}

void RegressionTree::validate(std::size_t feature_count) const {
  auto bad = [](const std::string& what) { fail(ErrorKind::UnsupportedFormat, "invalid tree: " + what); };
  if (nodes.empty()) bad("no nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    const bool split = n.feature && n.threshold && n.left && n.right;
    const bool any_split = n.feature || n.threshold || n.left || n.right;
    if (n.leaf_value) {
      if (any_split) bad("node " + std::to_string(i) + " is both leaf and split");
      if (!std::isfinite(*n.leaf_value)) bad("node " + std::to_string(i) + " has a non-finite value");
      continue;
    }
    if (!split) bad("node " + std::to_string(i) + " is neither a leaf nor a complete split");
    if (*n.feature < 0 || static_cast<std::size_t>(*n.feature) >= feature_count)
      bad("node " + std::to_string(i) + " references feature " + std::to_string(*n.feature));
    if (!std::isfinite(*n.threshold)) bad("node " + std::to_string(i) + " has a non-finite threshold");
    for (int c : {*n.left, *n.right})
      if (c < 0 || static_cast<std::size_t>(c) >= nodes.size()) bad("node " + std::to_string(i) + " child out of range");
  }
  // every node reachable exactly once from the root
  std::vector<char> seen(nodes.size(), 0);
  std::vector<std::size_t> stack{0};
  std::size_t visited = 0;
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    if (seen[i]) bad("node " + std::to_string(i) + " reached twice");
    seen[i] = 1;
    ++visited;
    if (!nodes[i].is_leaf()) {
      stack.push_back(static_cast<std::size_t>(*nodes[i].right));
      stack.push_back(static_cast<std::size_t>(*nodes[i].left));
    }
  }
  if (visited != nodes.size()) bad("unreachable nodes");
}

namespace {

struct Builder {
  const Dataset& data;
  std::span<const double> w;
  int max_depth;
  RegressionTree tree;

  int build(std::vector<std::size_t> idx, int depth) {
    const int at = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sw = 0.0, swy = 0.0;
    for (std::size_t i : idx) {
      sw += w[i];
      swy += w[i] * data.labels[i];
    }
    const double mean = swy / sw;

    bool constant = true;
    for (std::size_t i : idx)
      if (data.labels[i] != data.labels[idx.front()]) {
        constant = false;
        break;
      }
    if (constant) {
      // exact, so a perfect fit is recognised downstream
      tree.nodes[at].leaf_value = data.labels[idx.front()];
      return at;
    }
    if (depth >= max_depth || idx.size() < 2) {
      tree.nodes[at].leaf_value = mean;
      return at;
    }

    const std::size_t nf = data.feature_count();
    double node_sse = 0.0;
    for (std::size_t i : idx) node_sse += w[i] * (data.labels[i] - mean) * (data.labels[i] - mean);
    // Candidates within rounding distance of the incumbent count as ties.
    const double tie_eps = kSplitTieTolerance * node_sse;
    double best_err = std::numeric_limits<double>::infinity();
    int best_f = -1;
    double best_thr = 0.0;
    std::vector<std::size_t> order;
    for (std::size_t f = 0; f < nf; ++f) {
      auto x = [&](std::size_t i) { return data.values[i * nf + f]; };
      order = idx;  // ascending sample index, so equal values keep index order
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a) < x(b); });
      // Labels centred on the node mean keep the sum-of-squares identity
      // well conditioned.
      double tw = 0.0, twy = 0.0, twyy = 0.0;
      for (std::size_t i : order) {
        const double y = data.labels[i] - mean;
        tw += w[i];
        twy += w[i] * y;
        twyy += w[i] * y * y;
      }
      double lw = 0.0, lwy = 0.0, lwyy = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const std::size_t i = order[k];
        const double y = data.labels[i] - mean;
        lw += w[i];
        lwy += w[i] * y;
        lwyy += w[i] * y * y;
        if (!(x(i) < x(order[k + 1]))) continue;
        const double rw = tw - lw, rwy = twy - lwy, rwyy = twyy - lwyy;
        if (lw <= 0.0 || rw <= 0.0) continue;
        const double err = (lwyy - lwy * lwy / lw) + (rwyy - rwy * rwy / rw);
        if (err < best_err - tie_eps) {
          best_err = err;
          best_f = static_cast<int>(f);
          best_thr = x(i);
        }
      }
    }
    if (best_f < 0) {
      tree.nodes[at].leaf_value = mean;
      return at;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) (data.values[i * nf + static_cast<std::size_t>(best_f)] <= best_thr ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    TreeNode& n = tree.nodes[at];
    n.feature = best_f;
    n.threshold = best_thr;
    n.left = l;
    n.right = r;
    return at;
  }
};

}  // namespace

RegressionTree fit_tree_weighted(const Dataset& data, std::span<const double> sample_weights, int max_depth) {
  data.validate();
  if (sample_weights.size() != data.size()) fail(ErrorKind::Domain, "sample weight count differs from dataset size");
  double total = 0.0;
  std::vector<std::size_t> idx;
  idx.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double wi = sample_weights[i];
    if (!(wi >= 0.0) || !std::isfinite(wi)) fail(ErrorKind::Domain, "sample weights must be finite and >= 0");
    total += wi;
    if (wi > 0.0) idx.push_back(i);
  }
  if (!(total > 0.0)) fail(ErrorKind::Domain, "sample weights must have a positive sum");
  Builder b{data, sample_weights, std::max(max_depth, 0), {}};
  b.build(std::move(idx), 0);
  return std::move(b.tree);
}

}  // namespace edgeml::boost
