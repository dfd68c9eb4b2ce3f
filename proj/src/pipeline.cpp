#include "tvprof/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "tvprof/csv.hpp"
#include "tvprof/rng.hpp"

namespace tvprof {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (grid.g_min < 1 || grid.g_max > kMaxComponents || grid.g_min > grid.g_max)
    throw std::invalid_argument("config: gmm grid bounds must lie within [1,15]");
  if (grid.em.restarts < 1 || grid.em.max_iter < 1 || !(grid.em.tol > 0.0))
    throw std::invalid_argument("config: gmm iteration settings must be positive");
  if (mcmc.burn_in < 0 || mcmc.kept < 1 || mcmc.thin < 1 || mcmc.chains < 1)
    throw std::invalid_argument("config: mcmc schedule values must be positive");
  if (aggregation.unit == AggregationUnit::kSessionWindow && aggregation.window_size < 1)
    throw std::invalid_argument("config: window_size must be >= 1");
  if (efa_factors < 0 || threads < 0)
    throw std::invalid_argument("config: negative counts");
}

RunConfig config_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  RunConfig c;
  c.input_path = j.value("input", "");
  c.out_dir = j.value("out", "");
  c.seed = j.value("seed", std::uint64_t{42});
  if (j.contains("aggregation")) {
    const auto& a = j.at("aggregation");
    const std::string unit = a.value("unit", "day");
    if (unit == "day")
      c.aggregation.unit = AggregationUnit::kCalendarDay;
    else if (unit == "window")
      c.aggregation.unit = AggregationUnit::kSessionWindow;
    else
      throw std::invalid_argument("config: aggregation.unit must be day or window");
    c.aggregation.window_size = a.value("window_size", 5);
  }
  c.standardize_features = j.value("standardize", true);
  const std::string space = j.value("input_space", "raw");
  if (space == "raw")
    c.input_space = InputSpace::kRaw17;
  else if (space == "factor")
    c.input_space = InputSpace::kFactorScores;
  else
    throw std::invalid_argument("config: input_space must be raw or factor");
  if (j.contains("efa")) c.efa_factors = j.at("efa").value("n_factors", 0);
  if (j.contains("gmm")) {
    const auto& g = j.at("gmm");
    c.grid.g_min = g.value("g_min", 1);
    c.grid.g_max = g.value("g_max", kMaxComponents);
    c.grid.em.restarts = g.value("restarts", 5);
    c.grid.em.max_iter = g.value("max_iter", 500);
    c.grid.em.tol = g.value("tol", 1e-8);
  }
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    c.mcmc.burn_in = m.value("burn_in", 10000);
    c.mcmc.kept = m.value("kept", 20000);
    c.mcmc.thin = m.value("thin", 15);
    c.mcmc.chains = m.value("chains", 4);
  }
  c.threads = j.value("threads", 0);
  c.save_draws = j.value("save_draws", false);
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["input"] = c.input_path;
  j["out"] = c.out_dir;
  j["seed"] = c.seed;
  j["aggregation"]["unit"] =
      c.aggregation.unit == AggregationUnit::kCalendarDay ? "day" : "window";
  j["aggregation"]["window_size"] = c.aggregation.window_size;
  j["standardize"] = c.standardize_features;
  j["input_space"] = c.input_space == InputSpace::kRaw17 ? "raw" : "factor";
  j["efa"]["n_factors"] = c.efa_factors;
  j["gmm"]["g_min"] = c.grid.g_min;
  j["gmm"]["g_max"] = c.grid.g_max;
  j["gmm"]["restarts"] = c.grid.em.restarts;
  j["gmm"]["max_iter"] = c.grid.em.max_iter;
  j["gmm"]["tol"] = c.grid.em.tol;
  j["mcmc"]["burn_in"] = c.mcmc.burn_in;
  j["mcmc"]["kept"] = c.mcmc.kept;
  j["mcmc"]["thin"] = c.mcmc.thin;
  j["mcmc"]["chains"] = c.mcmc.chains;
  j["threads"] = c.threads;
  j["save_draws"] = c.save_draws;
  return j.dump(2);
}

namespace {

std::string out_path(const RunConfig& c, const char* name) {
  return (fs::path(c.out_dir) / name).string();
}

void ensure_out_dir(const RunConfig& c) {
  if (c.out_dir.empty()) throw std::invalid_argument("config: out directory not set");
  fs::create_directories(c.out_dir);
}

void write_manifest(const RunConfig& c) {
  csv::write_file(out_path(c, "manifest.json"), manifest_json(c));
}

int worker_count(const RunConfig& c) {
  if (c.threads > 0) return c.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 2;
}

// deterministic parallel map: items claim indices, results land in slots
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (n <= 0) return;
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        while (true) {
          const int i = next.fetch_add(1);
          if (i >= n) break;
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string manifest_json(const RunConfig& c) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config"] = nlohmann::json::parse(config_to_json(c));
  std::string digest = "unavailable";
  try {
    const std::string content = csv::read_file(c.input_path);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(content)));
    digest = buf;
  } catch (const std::exception&) {
  }
  j["input_digest"] = digest;
  return j.dump(2);
}

std::string feature_rows_to_csv(const std::vector<FeatureRow>& rows) {
  std::string out = "household_id,month,unit_id";
  for (const char* name : kFeatureNames) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (const auto& r : rows) {
    out += r.household_id;
    out += ',';
    out += r.month.to_string();
    out += ',';
    out += r.unit_id;
    for (Eigen::Index j = 0; j < r.values.size(); ++j) {
      out += ',';
      out += csv::format_double(r.values(j));
    }
    out += '\n';
  }
  return out;
}

std::vector<FeatureRow> feature_rows_from_csv(const std::string& text) {
  const auto all = csv::lines(text);
  if (all.empty()) throw std::runtime_error("features.csv: empty file");
  std::vector<FeatureRow> rows;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const auto fields = csv::split(all[i], ',');
    if (fields.size() != 3 + kNumFeatures)
      throw std::runtime_error("features.csv: malformed row " + std::to_string(i + 1));
    FeatureRow r;
    r.household_id = std::string(fields[0]);
    const auto ym = parse_year_month(fields[1]);
    if (!ym) throw std::runtime_error("features.csv: bad month on row " +
                                      std::to_string(i + 1));
    r.month = *ym;
    r.unit_id = std::string(fields[2]);
    r.values.resize(kNumFeatures);
    for (int j = 0; j < kNumFeatures; ++j) {
      const auto v = csv::parse_double(fields[static_cast<std::size_t>(3 + j)]);
      if (!v) throw std::runtime_error("features.csv: bad value on row " +
                                       std::to_string(i + 1));
      r.values(j) = *v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

FeatureStageResult cmd_features(const RunConfig& config) {
  config.validate();
  ensure_out_dir(config);
  write_manifest(config);

  const ParseResult parsed = parse_sessions_file(config.input_path);
  const auto groups = group_by_household_month(parsed.sessions);

  std::vector<FeatureRow> rows;
  std::string skipped = "household_id,month,reason\n";
  int n_skipped = 0;
  for (const auto& hm : groups) {
    try {
      const FeatureMatrix fm = build_feature_matrix(hm, config.aggregation);
      for (const auto& uid : fm.skipped_units) {
        skipped += hm.household_id + "," + hm.month.to_string() +
                   ",unit without program ratios: " + uid + "\n";
      }
      for (std::size_t u = 0; u < fm.unit_ids.size(); ++u) {
        FeatureRow r;
        r.household_id = hm.household_id;
        r.month = hm.month;
        r.unit_id = fm.unit_ids[u];
        r.values = fm.values.row(static_cast<Eigen::Index>(u));
        rows.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      skipped += hm.household_id + "," + hm.month.to_string() + "," + e.what() + "\n";
      ++n_skipped;
    }
  }

  csv::write_file(out_path(config, "features.csv"), feature_rows_to_csv(rows));
  csv::write_file(out_path(config, "rejections.csv"),
                  rejections_to_csv(parsed.rejections));
  csv::write_file(out_path(config, "features_skipped.csv"), skipped);

  FeatureStageResult res;
  res.n_sessions = static_cast<long>(parsed.sessions.size());
  res.n_rejected = static_cast<long>(parsed.rejections.size());
  res.n_household_months = static_cast<int>(groups.size()) - n_skipped;
  res.n_skipped = n_skipped;
  return res;
}

namespace {

Eigen::MatrixXd stack_rows(const std::vector<FeatureRow>& rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), kNumFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = rows[i].values;
  return x;
}

}  // namespace

ReduceStageResult cmd_reduce(const RunConfig& config) {
  config.validate();
  ensure_out_dir(config);
  write_manifest(config);

  const auto rows =
      feature_rows_from_csv(csv::read_file(out_path(config, "features.csv")));
  if (rows.size() < 3)
    throw std::runtime_error("cmd_reduce: not enough feature rows for factor analysis");
  const Eigen::MatrixXd x = stack_rows(rows);

  ReduceStageResult res;
  int k = config.efa_factors;
  if (k == 0) {
    const auto analysis = choose_n_factors(correlation_matrix(x));
    k = analysis.k;
    res.kaiser_fallback = analysis.fallback;
  }
  EfaModel model;
  try {
    model = fit_efa(x, k);
  } catch (EfaNonConvergence& e) {
    model = e.last_iterate;  // exported with converged=false
  }
  res.n_factors = model.n_factors;
  res.explained_variance_fraction = model.explained_variance_fraction;

  csv::write_file(out_path(config, "loadings.csv"), loadings_to_csv(model));
  csv::write_file(out_path(config, "efa_model.json"), efa_model_to_json(model));

  const Eigen::MatrixXd scores = factor_scores(model, x);
  std::string score_csv = "household_id,month,unit_id";
  for (int f = 1; f <= model.n_factors; ++f) score_csv += ",factor_" + std::to_string(f);
  score_csv += '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    score_csv += rows[i].household_id + "," + rows[i].month.to_string() + "," +
                 rows[i].unit_id;
    for (Eigen::Index f = 0; f < scores.cols(); ++f) {
      score_csv += ',';
      score_csv += csv::format_double(scores(static_cast<Eigen::Index>(i), f));
    }
    score_csv += '\n';
  }
  csv::write_file(out_path(config, "factor_scores.csv"), score_csv);
  return res;
}

EstimateStageResult cmd_estimate(const RunConfig& config) {
  return cmd_estimate(config, "estimates.csv");
}

EstimateStageResult cmd_estimate(const RunConfig& config,
                                 const std::string& estimates_filename) {
  config.validate();
  ensure_out_dir(config);
  write_manifest(config);

  const auto rows =
      feature_rows_from_csv(csv::read_file(out_path(config, "features.csv")));

  std::optional<EfaModel> efa;
  if (config.input_space == InputSpace::kFactorScores) {
    const std::string model_path = out_path(config, "efa_model.json");
    if (!fs::exists(model_path)) cmd_reduce(config);
    efa = efa_model_from_json(csv::read_file(model_path));
  }

  // group rows into household-month blocks, in file (= sorted) order
  struct Block {
    std::string household_id;
    YearMonth month;
    std::vector<std::size_t> row_idx;
  };
  std::vector<Block> blocks;
  std::map<std::pair<std::string, YearMonth>, std::size_t> block_of;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto key = std::make_pair(rows[i].household_id, rows[i].month);
    auto it = block_of.find(key);
    if (it == block_of.end()) {
      block_of.emplace(key, blocks.size());
      blocks.push_back({rows[i].household_id, rows[i].month, {i}});
    } else {
      blocks[it->second].row_idx.push_back(i);
    }
  }

  struct Slot {
    std::optional<ProfileEstimate> estimate;
    std::string error;
  };
  std::vector<Slot> slots(blocks.size());

  parallel_for(static_cast<int>(blocks.size()), worker_count(config), [&](int bi) {
    const auto& blk = blocks[static_cast<std::size_t>(bi)];
    auto& slot = slots[static_cast<std::size_t>(bi)];
    try {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(blk.row_idx.size()), kNumFeatures);
      for (std::size_t r = 0; r < blk.row_idx.size(); ++r)
        x.row(static_cast<Eigen::Index>(r)) = rows[blk.row_idx[r]].values;
      if (efa) x = factor_scores(*efa, x);
      if (config.standardize_features) x = standardize(x).values;

      const std::uint64_t seed = derive_seed(
          config.seed, "estimate", fnv1a64(blk.household_id),
          static_cast<std::uint64_t>(blk.month.index()));
      ProfileEstimate est = estimate_household_month(x, config.grid, seed);
      est.household_id = blk.household_id;
      est.month = blk.month;
      slot.estimate = std::move(est);
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  });

  std::vector<ProfileEstimate> estimates;
  std::string skipped = "household_id,month,reason\n";
  EstimateStageResult res;
  double wb_sum = 0.0;
  int wb_n = 0;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    if (slots[bi].estimate) {
      const auto& e = *slots[bi].estimate;
      res.mean_g_hat += e.g_hat;
      if (e.wb) {
        wb_sum += *e.wb;
        ++wb_n;
      }
      estimates.push_back(e);
    } else {
      skipped += blocks[bi].household_id + "," + blocks[bi].month.to_string() + "," +
                 slots[bi].error + "\n";
      ++res.n_skipped;
    }
  }
  res.n_estimates = static_cast<int>(estimates.size());
  if (res.n_estimates > 0) res.mean_g_hat /= res.n_estimates;
  if (wb_n > 0) res.mean_wb_ratio = wb_sum / wb_n;

  csv::write_file(out_path(config, estimates_filename.c_str()),
                  estimates_to_csv(estimates));
  csv::write_file(out_path(config, "estimates_skipped.csv"), skipped);
  return res;
}

std::vector<ProfileEstimate> estimates_from_csv(const std::string& text) {
  const auto all = csv::lines(text);
  if (all.empty()) throw std::runtime_error("estimates.csv: empty file");
  std::vector<ProfileEstimate> out;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const auto f = csv::split(all[i], ',');
    if (f.size() != 8)
      throw std::runtime_error("estimates.csv: malformed row " + std::to_string(i + 1));
    ProfileEstimate e;
    e.household_id = std::string(f[0]);
    const auto ym = parse_year_month(f[1]);
    const auto g_hat = csv::parse_double(f[2]);
    const auto st = parse_structure(f[3]);
    const auto best_g = csv::parse_long(f[4]);
    const auto n_units = csv::parse_long(f[6]);
    if (!ym || !g_hat || !st || !best_g || !n_units)
      throw std::runtime_error("estimates.csv: malformed row " + std::to_string(i + 1));
    e.month = *ym;
    e.g_hat = *g_hat;
    e.best_structure = *st;
    e.best_g = static_cast<int>(*best_g);
    if (!f[5].empty()) {
      const auto wb = csv::parse_double(f[5]);
      if (!wb) throw std::runtime_error("estimates.csv: malformed wb_ratio");
      e.wb = *wb;
    }
    e.n_units = static_cast<int>(*n_units);
    e.capped = f[7] == "true";
    out.push_back(std::move(e));
  }
  return out;
}

PanelData panel_from_estimates(const std::vector<ProfileEstimate>& estimates) {
  if (estimates.empty())
    throw std::runtime_error("panel_from_estimates: no estimates");
  std::map<std::string, std::map<int, double>> by_household;
  int min_idx = std::numeric_limits<int>::max();
  int max_idx = std::numeric_limits<int>::min();
  for (const auto& e : estimates) {
    by_household[e.household_id][e.month.index()] = e.g_hat;
    min_idx = std::min(min_idx, e.month.index());
    max_idx = std::max(max_idx, e.month.index());
  }

  PanelData panel;
  const int t_len = max_idx - min_idx + 1;
  panel.y.resize(static_cast<Eigen::Index>(by_household.size()), t_len);
  panel.y.setConstant(std::numeric_limits<double>::quiet_NaN());
  for (int t = 0; t < t_len; ++t) {
    const int idx = min_idx + t;
    panel.months.push_back({idx / 12, idx % 12 + 1});
  }
  Eigen::Index i = 0;
  for (const auto& [hh, cells] : by_household) {
    panel.household_ids.push_back(hh);
    for (const auto& [idx, y] : cells) panel.y(i, idx - min_idx) = y;
    ++i;
  }
  return panel;
}

UncertaintyStageResult cmd_uncertainty(const RunConfig& config) {
  config.validate();
  ensure_out_dir(config);
  write_manifest(config);

  const auto estimates =
      estimates_from_csv(csv::read_file(out_path(config, "estimates.csv")));
  const PanelData panel = panel_from_estimates(estimates);

  const PosteriorDraws draws =
      run_mcmc(panel, config.mcmc, derive_seed(config.seed, "mcmc"));
  const PosteriorSummary summary = summarize(draws);

  csv::write_file(out_path(config, "posterior_summary.csv"),
                  summary_to_csv(summary, panel));
  csv::write_file(out_path(config, "uncertainty_plot.csv"),
                  plot_data_to_csv(summary, panel));
  csv::write_file(out_path(config, "diagnostics.csv"), diagnostics_to_csv(summary));
  if (config.save_draws)
    csv::write_file(out_path(config, "draws.csv"), draws_to_csv(draws));

  UncertaintyStageResult res;
  res.n_households = static_cast<int>(panel.n_households());
  res.n_months = static_cast<int>(panel.n_months());
  for (const auto& h : summary.hyperparams)
    res.max_hyper_rhat = std::max(res.max_hyper_rhat, h.rhat);
  return res;
}

PipelineResult run_pipeline(const RunConfig& config) {
  PipelineResult res;
  res.features = cmd_features(config);
  if (config.input_space == InputSpace::kFactorScores)
    res.reduce = cmd_reduce(config);
  res.estimate = cmd_estimate(config);
  res.uncertainty = cmd_uncertainty(config);
  return res;
}

}  // namespace tvprof
