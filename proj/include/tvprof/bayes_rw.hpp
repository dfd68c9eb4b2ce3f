#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tvprof/ingest.hpp"
#include "tvprof/rng.hpp"

namespace tvprof {

// Gamma(shape = tau, rate = tau/mu) restricted to [1, inf) and renormalized
// by the upper tail probability at 1; the untruncated mean is mu.
// Log density; y < 1 gives -inf. Throws on nonpositive mu or tau.
double trunc_gamma_logpdf(double y, double mu, double tau);

// Inverse-CDF sampling on the conditional tail, with a rejection fallback
// from a shifted-exponential proposal when the tail mass underflows.
double trunc_gamma_sample(double mu, double tau, RngStream& rng);

// Missing cells are NaN; observed cells must be >= 1.
struct PanelData {
  std::vector<std::string> household_ids;  // N
  std::vector<YearMonth> months;           // T, contiguous calendar months
  Eigen::MatrixXd y;                       // N x T

  Eigen::Index n_households() const { return y.rows(); }
  Eigen::Index n_months() const { return y.cols(); }
  bool observed(Eigen::Index i, Eigen::Index t) const {
    return std::isfinite(y(i, t));
  }
};

// log(mu_it) = beta_i + w_it with w_i0 = 0 anchoring the walk.
struct ModelState {
  double beta0 = 0.0;
  double sigma2_beta = 1.0;  // prior support (0, 100)
  double sigma2_xi = 1.0;    // prior support (0, 100)
  double tau = 1.0;          // prior support (0, 50)
  Eigen::VectorXd beta;      // N
  Eigen::MatrixXd w;         // N x T

  double mu(Eigen::Index i, Eigen::Index t) const {
    return std::exp(beta(i) + w(i, t));
  }
};

// Truncated-Gamma likelihood over observed cells, Gaussian random-walk
// increments, Gaussian random intercepts, and the priors
// beta0 ~ N(0, 100), sigma2_beta ~ U(0,100), sigma2_xi ~ U(0,100),
// tau ~ U(0,50). Returns -inf outside the support.
double log_posterior(const ModelState& state, const PanelData& panel);

struct McmcSchedule {
  int burn_in = 10000;
  int kept = 20000;  // post-burn-in iterations
  int thin = 15;
  int chains = 4;

  int stored_per_chain() const { return kept / thin; }
};

struct PosteriorDraws {
  McmcSchedule schedule;
  std::vector<std::string> param_names;     // flattened scalar layout
  std::vector<Eigen::MatrixXd> chain_draws; // per chain: stored x n_params
  std::vector<std::uint64_t> chain_seeds;
  std::uint64_t master_seed = 0;
  Eigen::Index n = 0;  // households
  Eigen::Index t = 0;  // months

  // scalar layout: beta0, sigma2_beta, sigma2_xi, tau, beta[0..N), w[i*T+t]
  Eigen::Index param_count() const { return 4 + n + n * t; }
};

// Metropolis-within-Gibbs with per-coordinate Gaussian random-walk
// proposals (log scale for the variances and tau, with Jacobian), step
// sizes adapted toward 0.44 acceptance during burn-in and frozen after.
// Chains run in parallel on independent seeded streams. Throws when the
// log posterior is non-finite at initialization.
PosteriorDraws run_mcmc(const PanelData& panel, const McmcSchedule& schedule,
                        std::uint64_t master_seed);

struct ScalarDiagnostic {
  std::string name;
  double mean = 0.0;
  double q2_5 = 0.0;
  double q97_5 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
};

struct CellSummary {
  Eigen::Index i = 0;
  Eigen::Index t = 0;
  double post_mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct PosteriorSummary {
  std::vector<CellSummary> cells;             // mu_it per household-month
  std::vector<ScalarDiagnostic> scalars;      // every stored scalar
  std::vector<ScalarDiagnostic> hyperparams;  // the four hyperparameters
};

// Equal-tailed 2.5/97.5% intervals over pooled thinned draws, split-R-hat
// and rank-normalized ESS per scalar. Requires >= 2 chains.
PosteriorSummary summarize(const PosteriorDraws& draws);

// Split-R-hat over a set of equal-length sequences (chains are split in
// half internally). Constant input gives 1.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);

// Rank-normalized effective sample size (Geyer initial monotone sums).
double rank_normalized_ess(const std::vector<Eigen::VectorXd>& chains);

std::string draws_to_csv(const PosteriorDraws& draws);
std::string summary_to_csv(const PosteriorSummary& summary, const PanelData& panel);
std::string plot_data_to_csv(const PosteriorSummary& summary, const PanelData& panel);
std::string diagnostics_to_csv(const PosteriorSummary& summary);

}  // namespace tvprof
