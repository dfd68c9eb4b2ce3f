#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tvprof {

// Covariance parameterization Sigma_k = lambda_k D_k A_k D_k^T with volume
// lambda, diagonal shape A (det 1) and orthogonal orientation D, each Equal
// across components, Variable, or Identity as encoded by the 3-letter tag.
enum class CovStructure {
  EII, VII, EEI, VEI, EVI, VVI, EEE,
  EVE, VEE, VVE, EEV, VEV, EVV, VVV,
};

inline constexpr int kNumStructures = 14;

inline constexpr std::array<CovStructure, kNumStructures> kAllStructures = {
    CovStructure::EII, CovStructure::VII, CovStructure::EEI, CovStructure::VEI,
    CovStructure::EVI, CovStructure::VVI, CovStructure::EEE, CovStructure::EVE,
    CovStructure::VEE, CovStructure::VVE, CovStructure::EEV, CovStructure::VEV,
    CovStructure::EVV, CovStructure::VVV,
};

const char* structure_name(CovStructure s);
std::optional<CovStructure> parse_structure(std::string_view name);

// Free parameters in the covariance part alone.
int cov_param_count(CovStructure s, int G, int d);

// Means (G*d) + mixing proportions (G-1) + covariance parameters.
int mixture_param_count(CovStructure s, int G, int d);

// Larger-is-better convention: 2*loglik - n_params*ln(n).
double bic_value(double loglik, int n_params, int n);

struct MixtureParams {
  Eigen::VectorXd weights;            // G, simplex
  Eigen::MatrixXd means;              // G x d
  std::vector<Eigen::MatrixXd> covs;  // G matrices, d x d, SPD
};

struct EStepResult {
  Eigen::MatrixXd resp;  // n x G, rows sum to 1
  double loglik = 0.0;
};

// Responsibilities via log-sum-exp; throws on a non-PD covariance.
EStepResult estep(const Eigen::MatrixXd& x, const MixtureParams& params);

// Observed-data log-likelihood only (no responsibilities).
double mixture_loglik(const Eigen::MatrixXd& x, const MixtureParams& params);

struct MstepOptions {
  CovStructure structure = CovStructure::VVV;
  double eig_floor = 0.0;        // absolute eigenvalue floor
  int inner_max_iter = 100;      // for shared orientation / shape alternation
  double inner_tol = 1e-8;
};

struct MstepResult {
  MixtureParams params;
  bool clamped = false;     // the eigenvalue floor engaged somewhere
  double min_cov_eig = 0.0; // smallest eigenvalue across composed covariances
  // shared pieces carried across EM iterations to warm-start the
  // alternating updates (EVE/VVE orientation, VEE composite, VEI/VEV shape)
  Eigen::MatrixXd shared_full;
  Eigen::VectorXd shared_diag;
};

// Weighted-scatter covariance estimation for every structure. `warm`, when
// given, seeds the alternating updates from the previous EM iterate so the
// EM objective cannot decrease.
MstepResult mstep(const Eigen::MatrixXd& x, const Eigen::MatrixXd& resp,
                  const MstepOptions& opts, const MstepResult* warm = nullptr);

struct EmConfig {
  int max_iter = 500;
  double tol = 1e-8;             // relative loglik change
  int restarts = 5;              // k-means++ initializations
  int inner_max_iter = 100;
  double inner_tol = 1e-8;
  double mass_floor = 1e-6;      // component mass below this -> failed fit
  double smoothing = 0.9;        // initial responsibility on the seeded cluster
};

struct MixtureFit {
  CovStructure structure = CovStructure::VVV;
  int G = 0;
  MixtureParams params;
  Eigen::MatrixXd responsibilities;  // n x G
  double loglik = -std::numeric_limits<double>::infinity();
  int n_params = 0;
  double bic = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  bool failed = false;
  std::string fail_reason;
  bool regularized = false;  // eigenvalue floor engaged at some iteration
  std::uint64_t seed = 0;
  std::vector<double> loglik_trace;  // best restart, one entry per iteration
};

// Fits by EM with seeded k-means++ restarts; the best final log-likelihood
// wins. A fit ending on a floored eigenvalue (likelihood spike) or with a
// collapsed component is returned with failed=true rather than thrown.
// Throws on n < G or non-finite input.
MixtureFit em_fit(const Eigen::MatrixXd& x, int G, CovStructure structure,
                  const EmConfig& config, std::uint64_t seed);

// k-means++ center seeding followed by nearest-center hard assignment.
std::vector<int> kmeanspp_assign(const Eigen::MatrixXd& x, int G,
                                 std::uint64_t seed);

std::string fit_summary_json(const MixtureFit& fit);

}  // namespace tvprof
