#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvprof/features.hpp"

namespace tvprof {

// Pearson correlation matrix; constant columns get unit diagonal and zero
// off-diagonal entries.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x);

struct EigenAnalysis {
  Eigen::VectorXd eigenvalues;          // descending
  Eigen::VectorXd cumulative_variance;  // fractions of total variance
  int k = 0;                            // Kaiser count (eigenvalues > 1)
  bool fallback = false;                // k was 0, reported with fallback 1
};

// Kaiser rule on a correlation matrix; throws on non-finite entries.
// When no eigenvalue exceeds 1 the returned k is 1 with fallback=true.
EigenAnalysis choose_n_factors(const Eigen::MatrixXd& corr);

struct EfaModel {
  Eigen::MatrixXd loadings;      // p x k, varimax-rotated, sign-fixed
  Eigen::VectorXd uniquenesses;  // p, 1 - communality
  int n_factors = 0;
  double explained_variance_fraction = 0.0;  // sum of communalities / p
  std::string rotation = "varimax";
  Standardization scaling;  // column means/sds used for scoring
  Eigen::MatrixXd score_coef;  // p x k regression (Thomson) coefficients
  bool heywood = false;        // a communality was clamped
  bool converged = false;
  int iterations = 0;
  std::vector<double> offdiag_objective_trace;  // residual correlation norm
};

struct EfaNonConvergence : std::runtime_error {
  explicit EfaNonConvergence(EfaModel m)
      : std::runtime_error("fit_efa: principal-axis iteration did not converge"),
        last_iterate(std::move(m)) {}
  EfaModel last_iterate;
};

// Iterated principal-axis extraction on the correlation matrix
// (communalities start at squared multiple correlations, tolerance 1e-6,
// 200 iterations) followed by varimax rotation. Requires rows >= 3k and
// k >= 1. Heywood communalities are clamped to 0.995 and flagged.
EfaModel fit_efa(const Eigen::MatrixXd& x, int k);

// Thomson regression scores from the rotated solution; zero column means
// on the fitting sample. Throws on a column-count mismatch.
Eigen::MatrixXd factor_scores(const EfaModel& model, const Eigen::MatrixXd& x);

// Orthogonal varimax rotation (pairwise sweeps).
Eigen::MatrixXd varimax_rotate(const Eigen::MatrixXd& loadings);

// Table-shaped export; loadings below blank_threshold in magnitude print
// as empty cells, mirroring the usual presentation of rotated solutions.
std::string loadings_to_csv(const EfaModel& model, double blank_threshold = 0.10);

std::string efa_model_to_json(const EfaModel& model);
EfaModel efa_model_from_json(const std::string& text);

}  // namespace tvprof
