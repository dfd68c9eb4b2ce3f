#include "tvprof/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tvprof/csv.hpp"
#include "tvprof/rng.hpp"

namespace tvprof {

WeightMatrix weight_transform(const BicMatrix& omega) {
  double max_val = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < kNumStructures; ++p)
    for (int g = 0; g < kMaxComponents; ++g)
      if (omega.valid(p, g)) max_val = std::max(max_val, omega.values(p, g));
  if (!std::isfinite(max_val))
    throw std::runtime_error("weight_transform: no valid fits");

  WeightMatrix out;
  out.weights.setZero();
  double total = 0.0;
  for (int p = 0; p < kNumStructures; ++p) {
    for (int g = 0; g < kMaxComponents; ++g) {
      if (!omega.valid(p, g)) continue;
      const double w = std::exp((omega.values(p, g) - max_val) / 2.0);
      out.weights(p, g) = w;
      total += w;
    }
  }
  out.weights /= total;
  return out;
}

double estimate_g(const WeightMatrix& weights) {
  double g_hat = 0.0;
  for (int p = 0; p < kNumStructures; ++p)
    for (int g = 0; g < kMaxComponents; ++g)
      g_hat += weights.weights(p, g) * static_cast<double>(g + 1);
  return g_hat;
}

double wb_ratio(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw std::invalid_argument("wb_ratio: label/row count mismatch");

  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
  std::vector<long> counts(static_cast<std::size_t>(n_clusters), 0);
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("wb_ratio: negative label");
    ++counts[static_cast<std::size_t>(l)];
  }
  const long nonempty =
      std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; });
  if (nonempty < 2) throw std::runtime_error("wb_ratio: ratio undefined");

  double within_sum = 0.0, between_sum = 0.0;
  long within_n = 0, between_n = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const double dist = (x.row(i) - x.row(j)).norm();
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        within_sum += dist;
        ++within_n;
      } else {
        between_sum += dist;
        ++between_n;
      }
    }
  }
  if (within_n == 0) throw std::runtime_error("wb_ratio: ratio undefined");
  const double between_mean = between_sum / static_cast<double>(between_n);
  if (between_mean <= 0.0) throw std::runtime_error("wb_ratio: ratio undefined");
  return (within_sum / static_cast<double>(within_n)) / between_mean;
}

namespace {

std::vector<int> hard_labels(const Eigen::MatrixXd& resp) {
  std::vector<int> labels(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index arg = 0;
    resp.row(i).maxCoeff(&arg);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return labels;
}

}  // namespace

ProfileEstimate estimate_household_month(const Eigen::MatrixXd& x,
                                         const GridConfig& config,
                                         std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  if (n < 2)
    throw std::runtime_error("estimate_household_month: fewer than 2 observations");
  if (config.g_min < 1 || config.g_max > kMaxComponents || config.g_min > config.g_max)
    throw std::invalid_argument("estimate_household_month: bad grid bounds");

  ProfileEstimate est;
  est.n_units = static_cast<int>(n);

  // zero-variance columns carry no clustering information and break the
  // Gaussian density; drop them rather than feeding degenerate directions
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - x.col(j).mean()).square().sum();
    if (var > 0.0)
      keep.push_back(j);
    else
      est.dropped_columns.push_back(static_cast<int>(j));
  }
  if (keep.empty())
    throw std::runtime_error("estimate_household_month: all columns constant");
  Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    xs.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);

  int g_cap = config.g_max;
  if (n <= kMaxComponents && static_cast<int>(n) - 1 < g_cap) {
    g_cap = static_cast<int>(n) - 1;
    est.capped = true;
  }

  double best_bic = -std::numeric_limits<double>::infinity();
  MixtureFit best_fit;
  bool have_best = false;
  for (int p = 0; p < kNumStructures; ++p) {
    for (int g = config.g_min; g <= g_cap; ++g) {
      const std::uint64_t cell_seed =
          mix64(mix64(seed, static_cast<std::uint64_t>(p)),
                static_cast<std::uint64_t>(g));
      const MixtureFit fit =
          em_fit(xs, g, kAllStructures[static_cast<std::size_t>(p)], config.em,
                 cell_seed);
      if (fit.failed) continue;
      est.omega.values(p, g - 1) = fit.bic;
      est.omega.valid(p, g - 1) = true;
      if (fit.bic > best_bic) {
        best_bic = fit.bic;
        best_fit = fit;
        have_best = true;
      }
    }
  }
  if (!have_best)
    throw std::runtime_error("estimate_household_month: no valid fits on the grid");

  const WeightMatrix w = weight_transform(est.omega);
  est.g_hat = estimate_g(w);
  est.best_structure = best_fit.structure;
  est.best_g = best_fit.G;
  if (best_fit.G >= 2) {
    try {
      est.wb = wb_ratio(xs, hard_labels(best_fit.responsibilities));
    } catch (const std::runtime_error&) {
      est.wb = std::nullopt;  // reported as missing
    }
  }
  return est;
}

std::string estimates_to_csv(const std::vector<ProfileEstimate>& estimates) {
  std::string out =
      "household_id,month,g_hat,best_structure,best_g,wb_ratio,n_units,capped\n";
  for (const auto& e : estimates) {
    out += e.household_id;
    out += ',';
    out += e.month.to_string();
    out += ',';
    out += csv::format_double(e.g_hat);
    out += ',';
    out += structure_name(e.best_structure);
    out += ',';
    out += std::to_string(e.best_g);
    out += ',';
    if (e.wb) out += csv::format_double(*e.wb);
    out += ',';
    out += std::to_string(e.n_units);
    out += ',';
    out += e.capped ? "true" : "false";
    out += '\n';
  }
  return out;
}

}  // namespace tvprof
