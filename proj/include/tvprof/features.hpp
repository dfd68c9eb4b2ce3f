#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "tvprof/ingest.hpp"

namespace tvprof {

inline constexpr int kNumFeatures = 17;

// Column order of the feature matrix; fixed across the project.
extern const std::array<const char*, kNumFeatures> kFeatureNames;

struct TransitionFeatures {
  long n_transitions = 0;  // sum over sessions of (sequence length - 1)
  long n_channels = 0;     // distinct channels seen in the unit
  long n_absorbing = 0;    // channels with zero outgoing transitions
};

// Transitions are counted between consecutive entries within a session;
// nothing is counted across session boundaries. A self-transition (the same
// channel twice in a row) counts as an outgoing edge, so a channel is
// absorbing iff it has outgoing degree zero in the unit's union graph.
// Throws on an empty session list ("empty unit").
TransitionFeatures transition_features(std::span<const SessionRecord> sessions);

struct StatSeven {
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;        // n-1 sample standard deviation; 0 for n = 1
  double skewness = 0.0;  // m3 / m2^(3/2), central moments with 1/n
  double kurtosis = 0.0;  // m4 / m2^2, non-excess
  double q2_5 = 0.0;
  double q97_5 = 0.0;
  bool degenerate = false;  // set when m2 == 0 (constant input or n = 1)

  std::array<double, 7> as_array() const {
    return {mean, median, sd, skewness, kurtosis, q2_5, q97_5};
  }
};

// Quantiles use linear interpolation of order statistics with
// h = (n-1) p + 1; median is the p = 0.5 quantile. Throws on empty input.
StatSeven stat_seven(std::span<const double> values);

enum class AggregationUnit { kCalendarDay, kSessionWindow };

struct AggregationRule {
  AggregationUnit unit = AggregationUnit::kCalendarDay;
  int window_size = 5;  // sessions per window when unit == kSessionWindow
};

struct FeatureMatrix {
  std::vector<std::string> unit_ids;  // one per row
  Eigen::MatrixXd values;             // units x 17, columns per kFeatureNames
  // units that had sessions but no program-ratio observations, skipped
  std::vector<std::string> skipped_units;
};

// One row per aggregation unit inside the household-month. Requires at
// least 2 usable units ("insufficient observations" otherwise).
FeatureMatrix build_feature_matrix(const HouseholdMonth& hm,
                                   const AggregationRule& rule);

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;               // n-1 scale; 1.0 stored for constant columns
  std::vector<bool> constant_cols;  // flagged columns were mapped to all-zeros
};

struct StandardizedMatrix {
  Eigen::MatrixXd values;
  Standardization scaling;
};

// Column-wise z-scoring; constant columns become all-zeros and are flagged.
StandardizedMatrix standardize(const Eigen::MatrixXd& x);

Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& z, const Standardization& s);

// Applies a previously fitted scaling (used when scoring new rows).
Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x,
                                      const Standardization& s);

}  // namespace tvprof
