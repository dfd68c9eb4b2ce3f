#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvprof/averaging.hpp"
#include "tvprof/bayes_rw.hpp"
#include "tvprof/factor.hpp"
#include "tvprof/features.hpp"
#include "tvprof/ingest.hpp"

namespace tvprof {

inline constexpr const char* kVersion = "0.1.0";

enum class InputSpace { kRaw17, kFactorScores };

struct RunConfig {
  std::string input_path;
  std::string out_dir;
  std::uint64_t seed = 42;
  AggregationRule aggregation;
  bool standardize_features = true;
  InputSpace input_space = InputSpace::kRaw17;
  int efa_factors = 0;  // 0 = Kaiser rule
  GridConfig grid;
  McmcSchedule mcmc;
  int threads = 0;  // 0 = hardware concurrency
  bool save_draws = false;

  void validate() const;  // throws on out-of-range settings
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& config);

// Stage outputs land in config.out_dir:
//   manifest.json                     every stage, identical content
//   features.csv, rejections.csv, features_skipped.csv
//   loadings.csv, efa_model.json, factor_scores.csv
//   estimates.csv, estimates_skipped.csv
//   posterior_summary.csv, uncertainty_plot.csv, diagnostics.csv
//   draws.csv                         when save_draws is set

struct FeatureStageResult {
  long n_sessions = 0;
  long n_rejected = 0;
  int n_household_months = 0;
  int n_skipped = 0;
};

// ingest + per-household-month feature matrices
FeatureStageResult cmd_features(const RunConfig& config);

struct ReduceStageResult {
  int n_factors = 0;
  double explained_variance_fraction = 0.0;
  bool kaiser_fallback = false;
};

// pooled exploratory factor analysis over all feature rows
ReduceStageResult cmd_reduce(const RunConfig& config);

struct EstimateStageResult {
  int n_estimates = 0;
  int n_skipped = 0;
  double mean_g_hat = 0.0;
  double mean_wb_ratio = 0.0;  // over defined ratios
};

// the (structure, G) grid + model averaging per household-month;
// the two-argument form writes the table under a different name (used to
// compare input spaces side by side)
EstimateStageResult cmd_estimate(const RunConfig& config);
EstimateStageResult cmd_estimate(const RunConfig& config,
                                 const std::string& estimates_filename);

struct UncertaintyStageResult {
  int n_households = 0;
  int n_months = 0;
  double max_hyper_rhat = 0.0;
};

// hierarchical random-walk model over the estimates panel
UncertaintyStageResult cmd_uncertainty(const RunConfig& config);

struct PipelineResult {
  FeatureStageResult features;
  std::optional<ReduceStageResult> reduce;
  EstimateStageResult estimate;
  UncertaintyStageResult uncertainty;
};

// features -> (reduce) -> estimate -> uncertainty, byte-identical to
// running the stages separately with the same config
PipelineResult run_pipeline(const RunConfig& config);

// ---- helpers shared by stages, the CLI, and the tests ----

struct FeatureRow {
  std::string household_id;
  YearMonth month;
  std::string unit_id;
  Eigen::RowVectorXd values;  // 17 features
};

std::string feature_rows_to_csv(const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> feature_rows_from_csv(const std::string& text);

std::vector<ProfileEstimate> estimates_from_csv(const std::string& text);

// Contiguous-month panel from the estimates table; households ordered by
// id, months spanning min..max; cells without an estimate are missing.
PanelData panel_from_estimates(const std::vector<ProfileEstimate>& estimates);

std::string manifest_json(const RunConfig& config);

}  // namespace tvprof
