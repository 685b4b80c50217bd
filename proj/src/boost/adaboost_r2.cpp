#include "edgeml/boost/adaboost_r2.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgeml/common/error.hpp"

namespace edgeml::boost {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Linear: return "linear";
    case LossKind::Square: return "square";
    case LossKind::Exponential: return "exponential";
  }
  return "linear";
}

LossKind parse_loss(std::string_view name) {
  if (name == "linear") return LossKind::Linear;
  if (name == "square") return LossKind::Square;
  if (name == "exponential") return LossKind::Exponential;
  fail(ErrorKind::UnsupportedFormat, "unsupported loss '" + std::string(name) + "'");
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) fail(ErrorKind::Domain, "weighted median of an empty set");
  if (values.size() != weights.size()) fail(ErrorKind::Domain, "weighted median: values and weights differ in length");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorKind::Domain, "weighted median: weights must be finite and > 0");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (std::size_t i : order) total += weights[i];
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t i : order) {
    cum += weights[i];
    if (cum >= half) return values[i];
  }
  return values[order.back()];
}

double AdaBoostR2Model::predict(std::span<const double> x) const {
  if (learners.empty()) fail(ErrorKind::Domain, "model has no learners");
  if (x.size() != feature_names.size()) fail(ErrorKind::Schema, "feature vector length differs from model");
  std::vector<double> preds;
  preds.reserve(learners.size());
  for (const auto& t : learners) preds.push_back(t.predict(x));
  return weighted_median(preds, log_weights);
}

namespace {

double sample_loss(LossKind kind, double relative_error) {
  switch (kind) {
    case LossKind::Linear: return relative_error;
    case LossKind::Square: return relative_error * relative_error;
    case LossKind::Exponential: return 1.0 - std::exp(-relative_error);
  }
  return relative_error;
}

enum class StopReason { Exhausted, Perfect, HighLoss };

// Runs up to `rounds` AdaBoost.R2 rounds from `weights`, appending kept
// learners to `model`. Returns why it stopped and how many rounds were kept.
std::pair<StopReason, int> run_rounds(const Dataset& data, LossKind loss, int max_depth, int rounds,
                                      std::vector<double>& weights, AdaBoostR2Model& model,
                                      std::vector<RoundTrace>* trace) {
  const std::size_t n = data.size();
  std::vector<double> err(n);
  int kept = 0;
  for (int t = 0; t < rounds; ++t) {
    RegressionTree tree = fit_tree_weighted(data, weights, max_depth);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = std::abs(data.labels[i] - tree.predict(data.row(i)));
      d = std::max(d, err[i]);
    }
    RoundTrace rt;
    rt.max_error = d;
    if (d == 0.0) {
      model.learners.push_back(std::move(tree));
      model.log_weights.push_back(kPerfectLearnerLogWeight);
      rt.kept = true;
      rt.weight_sum_after = std::accumulate(weights.begin(), weights.end(), 0.0);
      if (trace) trace->push_back(rt);
      return {StopReason::Perfect, kept + 1};
    }
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = sample_loss(loss, err[i] / d);
      avg += weights[i] * err[i];
    }
    rt.average_loss = avg;
    if (avg >= 0.5) {
      rt.weight_sum_after = std::accumulate(weights.begin(), weights.end(), 0.0);
      if (trace) trace->push_back(rt);
      return {StopReason::HighLoss, kept};
    }
    if (avg <= 0.0) {
      // every sample carrying weight is fitted exactly
      model.learners.push_back(std::move(tree));
      model.log_weights.push_back(kPerfectLearnerLogWeight);
      rt.kept = true;
      rt.weight_sum_after = std::accumulate(weights.begin(), weights.end(), 0.0);
      if (trace) trace->push_back(rt);
      return {StopReason::Perfect, kept + 1};
    }
    const double beta = avg / (1.0 - avg);
    rt.beta = beta;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] *= std::pow(beta, 1.0 - err[i]);
      sum += weights[i];
    }
    for (double& w : weights) w /= sum;
    model.learners.push_back(std::move(tree));
    model.log_weights.push_back(std::log(1.0 / beta));
    ++kept;
    rt.kept = true;
    rt.weight_sum_after = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (trace) trace->push_back(rt);
  }
  return {StopReason::Exhausted, kept};
}

}  // namespace

AdaBoostR2Model fit_adaboost_r2(const Dataset& data, const AdaBoostParams& params, std::vector<RoundTrace>* trace) {
  data.validate();
  if (params.rounds < 1) fail(ErrorKind::Domain, "boosting needs at least one round");
  AdaBoostR2Model model;
  model.feature_names = data.feature_names;
  model.loss = params.loss;
  std::vector<double> weights(data.size(), 1.0 / static_cast<double>(data.size()));
  auto [reason, kept] = run_rounds(data, params.loss, params.max_depth, params.rounds, weights, model, trace);
  if (kept == 0 && reason == StopReason::HighLoss) {
    std::vector<double> uniform(data.size(), 1.0);
    model.learners.push_back(fit_tree_weighted(data, uniform, params.max_depth));
    model.log_weights.push_back(1.0);
    model.fallback = true;
  }
  return model;
}

RetrainWindow::RetrainWindow(std::vector<std::string> feature_names, std::size_t capacity)
    : feature_names_(std::move(feature_names)), capacity_(capacity) {
  if (capacity_ == 0) fail(ErrorKind::Domain, "retraining window capacity must be > 0");
}

void RetrainWindow::add(std::span<const double> features, double label) {
  if (features.size() != feature_names_.size()) fail(ErrorKind::Schema, "sample width differs from window schema");
  rows_.emplace_back(features.begin(), features.end());
  labels_.push_back(label);
  while (labels_.size() > capacity_) {
    rows_.pop_front();
    labels_.pop_front();
  }
}

void RetrainWindow::add(const Dataset& samples) {
  if (samples.feature_names != feature_names_) fail(ErrorKind::Schema, "sample feature names differ from window schema");
  for (std::size_t i = 0; i < samples.size(); ++i) add(samples.row(i), samples.labels[i]);
}

Dataset RetrainWindow::snapshot() const {
  Dataset d;
  d.feature_names = feature_names_;
  d.values.reserve(rows_.size() * feature_names_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) d.add_row(rows_[i], labels_[i]);
  return d;
}

AdaBoostR2Model local_update(const AdaBoostR2Model& model, RetrainWindow& window, const Dataset& new_samples,
                             int extra_rounds, int max_depth, std::vector<RoundTrace>* trace) {
  if (new_samples.feature_names != model.feature_names)
    fail(ErrorKind::Schema, "new samples do not match the model's feature names");
  if (window.feature_names() != model.feature_names)
    fail(ErrorKind::Schema, "retraining window does not match the model's feature names");
  if (extra_rounds < 0) fail(ErrorKind::Domain, "extra rounds must be >= 0");
  new_samples.validate();
  window.add(new_samples);
  AdaBoostR2Model updated = model;
  if (extra_rounds == 0) return updated;
  const Dataset data = window.snapshot();
  std::vector<double> weights(data.size(), 1.0 / static_cast<double>(data.size()));
  run_rounds(data, model.loss, max_depth, extra_rounds, weights, updated, trace);
  return updated;
}

}  // namespace edgeml::boost
