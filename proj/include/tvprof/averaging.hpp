#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvprof/gmm.hpp"
#include "tvprof/ingest.hpp"

namespace tvprof {

inline constexpr int kMaxComponents = 15;

// 14 x 15 table of BIC values omega_pg, one row per covariance structure,
// one column per component count, with a validity mask for failed fits.
struct BicMatrix {
  Eigen::MatrixXd values{kNumStructures, kMaxComponents};
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> valid{kNumStructures,
                                                            kMaxComponents};

  BicMatrix() {
    values.setConstant(-std::numeric_limits<double>::infinity());
    valid.setConstant(false);
  }
  int n_valid() const { return static_cast<int>(valid.cast<int>().sum()); }
};

struct WeightMatrix {
  Eigen::MatrixXd weights{kNumStructures, kMaxComponents};  // sums to 1
};

// exp((omega - max)/2) / sum over valid cells, masked cells get weight 0;
// algebraically identical to shifting by min(omega) but overflow-safe.
// Throws when every cell is masked ("no valid fits").
WeightMatrix weight_transform(const BicMatrix& omega);

// G_hat = sum_pg w'_pg * C_g over the component grid C = (1..15).
double estimate_g(const WeightMatrix& weights);

// Mean pairwise Euclidean distance within clusters over the mean pairwise
// distance between clusters, from hard labels. Throws "ratio undefined"
// when there are no within-cluster pairs, fewer than 2 nonempty clusters,
// or the between-cluster mean distance is zero.
double wb_ratio(const Eigen::MatrixXd& x, const std::vector<int>& labels);

struct GridConfig {
  int g_min = 1;
  int g_max = kMaxComponents;
  EmConfig em;
};

struct ProfileEstimate {
  std::string household_id;
  YearMonth month;
  double g_hat = 1.0;
  CovStructure best_structure = CovStructure::EII;
  int best_g = 1;
  std::optional<double> wb = std::nullopt;  // missing when undefined
  int n_units = 0;
  bool capped = false;  // grid truncated at n-1 components
  BicMatrix omega;
  std::vector<int> dropped_columns;  // zero-variance columns removed pre-fit
};

// Fits the full (structure, G) grid on one household-month observation
// matrix (rows = aggregation units), masks failed cells, and averages.
// G is capped at n-1 when n <= 15. Zero-variance columns are dropped from
// the clustering input and recorded. Throws when fewer than 2 rows or no
// grid cell yields a valid fit.
ProfileEstimate estimate_household_month(const Eigen::MatrixXd& x,
                                         const GridConfig& config,
                                         std::uint64_t seed);

std::string estimates_to_csv(const std::vector<ProfileEstimate>& estimates);

}  // namespace tvprof
