#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgeml/boost/dataset.hpp"
#include "edgeml/boost/tree.hpp"

namespace edgeml::boost {

enum class LossKind { Linear, Square, Exponential };

std::string_view to_string(LossKind kind);
/// Error{UnsupportedFormat} for names other than linear | square | exponential.
LossKind parse_loss(std::string_view name);

struct AdaBoostParams {
  int rounds = 50;
  LossKind loss = LossKind::Linear;
  int max_depth = 3;
};

/// log_weight given to a learner that fits its training set exactly.
inline const double kPerfectLearnerLogWeight = std::log(1e9);

/// Weighted-median ensemble of regression trees. Every stored round had an
/// average loss below 0.5, so every log weight ln(1/β) is positive.
struct AdaBoostR2Model {
  std::vector<std::string> feature_names;
  LossKind loss = LossKind::Linear;
  std::vector<RegressionTree> learners;
  std::vector<double> log_weights;
  /// Round one already had average loss >= 0.5; the model is the single
  /// uniformly weighted tree.
  bool fallback = false;

  double predict(std::span<const double> x) const;
  std::size_t rounds() const { return learners.size(); }
};

/// Per-round diagnostics, one entry per attempted round.
struct RoundTrace {
  double max_error = 0.0;     // D
  double average_loss = 0.0;  // L̄
  double beta = 0.0;
  bool kept = false;
  double weight_sum_after = 0.0;  // sum of sample weights after renormalising
};

/// AdaBoost.R2 with weighted fitting (no resampling). Deterministic in the
/// dataset order. `trace`, when given, receives one entry per attempted round.
AdaBoostR2Model fit_adaboost_r2(const Dataset& data, const AdaBoostParams& params,
                                std::vector<RoundTrace>* trace = nullptr);

/// Sorts by value and returns the first value whose cumulative weight
/// reaches half of the total; equal cumulative positions resolve to the
/// lower value. Error{Domain} on empty or mismatched input.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// Sliding window of the most recent labelled samples kept for local
/// retraining.
class RetrainWindow {
 public:
  static constexpr std::size_t kDefaultCapacity = 5000;

  explicit RetrainWindow(std::vector<std::string> feature_names, std::size_t capacity = kDefaultCapacity);

  void add(std::span<const double> features, double label);
  void add(const Dataset& samples);
  Dataset snapshot() const;

  std::size_t size() const { return labels_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

 private:
  std::vector<std::string> feature_names_;
  std::size_t capacity_;
  std::deque<std::vector<double>> rows_;
  std::deque<double> labels_;
};

/// Adds `new_samples` to `window` and runs up to `extra_rounds` boosting
/// rounds over the window contents, starting from uniform sample weights.
/// New learners are appended; existing learners and weights are untouched.
/// A round whose average loss reaches 0.5 ends the update (nothing appended
/// for it). Error{Schema} when the feature names differ.
AdaBoostR2Model local_update(const AdaBoostR2Model& model, RetrainWindow& window, const Dataset& new_samples,
                             int extra_rounds, int max_depth = 3, std::vector<RoundTrace>* trace = nullptr);

}  // namespace edgeml::boost
