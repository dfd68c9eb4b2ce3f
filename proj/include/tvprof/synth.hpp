#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tvprof/bayes_rw.hpp"
#include "tvprof/ingest.hpp"

namespace tvprof {

// One latent viewing pattern: a Markov chain over a channel set plus
// session-level distributions.
struct ProfileSpec {
  std::vector<std::string> channels;
  Eigen::MatrixXd transition;   // stochastic matrix, rows sum to 1
  double duration_meanlog = std::log(3600.0);
  double duration_sdlog = 0.3;
  double ratio_alpha = 2.0;     // Beta parameters for program ratios
  double ratio_beta = 2.0;
  double sessions_per_day = 3.0;  // Poisson rate, at least one enforced
  double seq_len_mean = 2.0;      // Poisson mean for entries beyond the first
  double programs_mean = 1.0;     // Poisson mean for programs beyond the first

  void validate() const;  // throws on malformed spec
};

struct HouseholdSpec {
  std::string household_id;
  std::vector<ProfileSpec> profiles;
  std::vector<double> selection_probs;  // per-day profile choice, simplex
  std::vector<YearMonth> months;        // active months

  void validate() const;
};

struct MonthTruth {
  std::string household_id;
  YearMonth month;
  int true_k = 0;  // distinct profiles that generated sessions this month
};

struct SyntheticSessions {
  std::vector<SessionRecord> sessions;  // ordered by (household, time)
  std::vector<MonthTruth> truth;

  std::string to_csv() const;  // exact ingest schema, canonical formatting
};

std::string truth_to_csv(const std::vector<MonthTruth>& truth);

// Every active day draws a profile, then a Poisson number of sessions
// (>= 1), channel sequences from the profile's Markov chain, and durations
// and ratios from its distributions. Deterministic per household given the
// master seed.
SyntheticSessions gen_sessions(const std::vector<HouseholdSpec>& specs,
                               std::uint64_t seed);

struct PanelHyperparams {
  double beta0 = 1.0;
  double sigma_beta = 0.3;  // standard deviations, not variances
  double sigma_xi = 0.2;
  double tau = 20.0;
};

struct PanelTruth {
  PanelHyperparams hyper;
  Eigen::VectorXd beta;  // N
  Eigen::MatrixXd w;     // N x T
  Eigen::MatrixXd mu;    // N x T
};

struct SyntheticPanel {
  PanelData panel;
  PanelTruth truth;
};

// Forward simulation of the hierarchical model; cells are masked missing
// independently at missing_rate.
SyntheticPanel gen_panel(const PanelHyperparams& hyper, int n_households,
                         int n_months, double missing_rate, std::uint64_t seed);

// Well-separated archetype profiles (disjoint channel sets, duration
// scales 600 / 3600 / 10800 s, distinct ratio and transition behaviour).
ProfileSpec archetype_profile(int index);

// Builds a ready-to-run population: household i gets 1 + (i mod
// max_profiles) archetype profiles; a fraction of household-months is
// deactivated to simulate missing coverage.
std::vector<HouseholdSpec> make_default_specs(int n_households, YearMonth first_month,
                                              int n_months, int max_profiles,
                                              double missing_rate,
                                              std::uint64_t seed);

}  // namespace tvprof
