#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tvprof/csv.hpp"
#include "tvprof/pipeline.hpp"
#include "tvprof/synth.hpp"

namespace fs = std::filesystem;
using namespace tvprof;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string input;
  std::string out;
  std::string input_space;
  std::string aggregation_unit;
  int window_size = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
  bool save_draws = false;
  int standardize = -1;  // -1 unset, 0 off, 1 on
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--input", f.input, "session-log CSV path");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "master seed")->each([&](const std::string&) {
    f.seed_set = true;
  });
  cmd->add_option("--input-space", f.input_space, "raw or factor");
  cmd->add_option("--aggregation", f.aggregation_unit, "day or window");
  cmd->add_option("--window-size", f.window_size, "sessions per window unit");
  cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
  cmd->add_flag("--save-draws", f.save_draws, "persist MCMC draws as CSV");
  cmd->add_flag("--standardize,!--no-standardize",
                [&f](std::int64_t v) { f.standardize = v > 0 ? 1 : 0; },
                "z-score features before clustering (default on)");
}

RunConfig build_config(const CommonFlags& f) {
  RunConfig c;
  if (!f.config_path.empty()) c = config_from_json(csv::read_file(f.config_path));
  if (!f.input.empty()) c.input_path = f.input;
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.seed_set) c.seed = f.seed;
  if (!f.input_space.empty()) {
    if (f.input_space == "raw")
      c.input_space = InputSpace::kRaw17;
    else if (f.input_space == "factor")
      c.input_space = InputSpace::kFactorScores;
    else
      throw CLI::ValidationError("--input-space must be raw or factor");
  }
  if (!f.aggregation_unit.empty()) {
    if (f.aggregation_unit == "day")
      c.aggregation.unit = AggregationUnit::kCalendarDay;
    else if (f.aggregation_unit == "window")
      c.aggregation.unit = AggregationUnit::kSessionWindow;
    else
      throw CLI::ValidationError("--aggregation must be day or window");
  }
  if (f.window_size > 0) c.aggregation.window_size = f.window_size;
  if (f.threads >= 0) c.threads = f.threads;
  if (f.save_draws) c.save_draws = true;
  if (f.standardize >= 0) c.standardize_features = f.standardize == 1;
  c.validate();
  return c;
}

int require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path)) {
    std::cerr << "error: missing " << what << ": "
              << (path.empty() ? "<unset>" : path) << "\n";
    return 2;
  }
  return 0;
}

void print_unit_summary(const RunConfig& config, const std::string& spec) {
  const auto parts = csv::split(spec, ':');
  if (parts.size() != 3)
    throw std::runtime_error("--show-unit expects household:YYYY-MM:unit_id");
  const auto rows = feature_rows_from_csv(
      csv::read_file((fs::path(config.out_dir) / "features.csv").string()));
  for (const auto& r : rows) {
    if (r.household_id != parts[0] || r.month.to_string() != parts[1] ||
        r.unit_id != parts[2])
      continue;
    static constexpr const char* kSources[3] = {"Transitions", "Program ratio",
                                                "Session duration"};
    static constexpr const char* kTransRows[3] = {"Number", "Channels",
                                                  "Absorbing states"};
    static constexpr const char* kStatRows[7] = {
        "Average", "Median", "Sd", "Skewness", "Kurtosis",
        "2.5% quantile", "97.5% quantile"};
    std::printf("%-18s %-16s %s\n", "Data source", "Feature", "Value");
    for (int j = 0; j < kNumFeatures; ++j) {
      const char* source = j < 3 ? kSources[0] : (j < 10 ? kSources[1] : kSources[2]);
      const char* feature = j < 3 ? kTransRows[j] : kStatRows[(j - 3) % 7];
      const bool lead = j == 0 || j == 3 || j == 10;
      std::printf("%-18s %-16s %.2f\n", lead ? source : "", feature, r.values(j));
    }
    return;
  }
  throw std::runtime_error("unit not found: " + spec);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Household TV profile estimation from set-top-box session logs"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic session log");
  std::string sim_out;
  int sim_households = 50, sim_months = 10, sim_max_profiles = 3;
  double sim_missing = 0.0;
  std::string sim_first_month = "2021-01";
  std::uint64_t sim_seed = 42;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--households", sim_households, "number of households");
  sim->add_option("--months", sim_months, "number of months");
  sim->add_option("--first-month", sim_first_month, "first month (YYYY-MM)");
  sim->add_option("--max-profiles", sim_max_profiles, "profiles per household cap (1-4)");
  sim->add_option("--missing-rate", sim_missing, "household-month dropout rate");
  sim->add_option("--seed", sim_seed, "generator seed");

  CommonFlags feat_f, red_f, est_f, unc_f, pipe_f;
  std::string show_unit;
  auto* feat = app.add_subcommand("features", "extract the 17 features per unit");
  add_common(feat, feat_f);
  feat->add_option("--show-unit", show_unit,
                   "print one unit's features (household:YYYY-MM:unit_id)");
  auto* red = app.add_subcommand("reduce", "factor analysis of the feature matrix");
  add_common(red, red_f);
  auto* est = app.add_subcommand("estimate", "profile-count estimates per household-month");
  add_common(est, est_f);
  bool compare_spaces = false;
  est->add_flag("--compare-spaces", compare_spaces,
                "also run the factor-score space and print both summaries");
  auto* unc = app.add_subcommand("uncertainty", "posterior uncertainty via MCMC");
  add_common(unc, unc_f);
  auto* pipe = app.add_subcommand("pipeline", "features -> estimate -> uncertainty");
  add_common(pipe, pipe_f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      const auto ym = parse_year_month(sim_first_month);
      if (!ym) {
        std::cerr << "error: --first-month must be YYYY-MM\n";
        return 2;
      }
      fs::create_directories(sim_out);
      const auto specs = make_default_specs(sim_households, *ym, sim_months,
                                            sim_max_profiles, sim_missing, sim_seed);
      const auto data = gen_sessions(specs, sim_seed);
      csv::write_file((fs::path(sim_out) / "sessions.csv").string(), data.to_csv());
      csv::write_file((fs::path(sim_out) / "truth.csv").string(),
                      truth_to_csv(data.truth));
      std::cout << "simulate: " << data.sessions.size() << " sessions, "
                << data.truth.size() << " household-months -> " << sim_out << "\n";
      return 0;
    }

    if (feat->parsed()) {
      const RunConfig config = build_config(feat_f);
      if (int rc = require_file(config.input_path, "input session log")) return rc;
      const auto res = cmd_features(config);
      std::cout << "features: " << res.n_sessions << " sessions ("
                << res.n_rejected << " rejected), " << res.n_household_months
                << " household-months, " << res.n_skipped << " skipped\n";
      if (!show_unit.empty()) print_unit_summary(config, show_unit);
      return 0;
    }

    if (red->parsed()) {
      const RunConfig config = build_config(red_f);
      if (int rc = require_file(
              (fs::path(config.out_dir) / "features.csv").string(), "features.csv"))
        return rc;
      const auto res = cmd_reduce(config);
      std::cout << "reduce: " << res.n_factors << " factors, "
                << res.explained_variance_fraction * 100.0
                << "% of variance" << (res.kaiser_fallback ? " (Kaiser fallback)" : "")
                << "\n";
      return 0;
    }

    if (est->parsed()) {
      RunConfig config = build_config(est_f);
      if (int rc = require_file(
              (fs::path(config.out_dir) / "features.csv").string(), "features.csv"))
        return rc;
      if (compare_spaces) {
        RunConfig raw_cfg = config;
        raw_cfg.input_space = InputSpace::kRaw17;
        const auto raw_res = cmd_estimate(raw_cfg, "estimates.csv");
        RunConfig fac_cfg = config;
        fac_cfg.input_space = InputSpace::kFactorScores;
        const auto fac_res = cmd_estimate(fac_cfg, "estimates_factor.csv");
        std::cout << "estimate[raw-17]:        mean G_hat " << raw_res.mean_g_hat
                  << ", mean wb_ratio " << raw_res.mean_wb_ratio << " ("
                  << raw_res.n_estimates << " household-months)\n";
        std::cout << "estimate[factor-scores]: mean G_hat " << fac_res.mean_g_hat
                  << ", mean wb_ratio " << fac_res.mean_wb_ratio << " ("
                  << fac_res.n_estimates << " household-months)\n";
        return 0;
      }
      const auto res = cmd_estimate(config);
      std::cout << "estimate: " << res.n_estimates << " household-months ("
                << res.n_skipped << " skipped), mean G_hat " << res.mean_g_hat
                << ", mean wb_ratio " << res.mean_wb_ratio << "\n";
      return 0;
    }

    if (unc->parsed()) {
      const RunConfig config = build_config(unc_f);
      if (int rc = require_file(
              (fs::path(config.out_dir) / "estimates.csv").string(), "estimates.csv"))
        return rc;
      const auto res = cmd_uncertainty(config);
      std::cout << "uncertainty: " << res.n_households << " households x "
                << res.n_months << " months, max hyperparameter R-hat "
                << res.max_hyper_rhat << "\n";
      return 0;
    }

    if (pipe->parsed()) {
      const RunConfig config = build_config(pipe_f);
      if (int rc = require_file(config.input_path, "input session log")) return rc;
      const auto res = run_pipeline(config);
      std::cout << "pipeline: " << res.features.n_sessions << " sessions -> "
                << res.estimate.n_estimates << " estimates (mean G_hat "
                << res.estimate.mean_g_hat << ") -> "
                << res.uncertainty.n_households << "x" << res.uncertainty.n_months
                << " posterior summaries\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
