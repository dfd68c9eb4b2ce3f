#include "tvprof/bayes_rw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "tvprof/csv.hpp"

namespace tvprof {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// log Q(a, x) with an asymptotic fallback once the tail underflows
double log_gamma_tail(double a, double x) {
  const double q = boost::math::gamma_q(a, x);
  if (q > 1e-290) return std::log(q);
  return (a - 1.0) * std::log(x) - x - std::lgamma(a) + std::log1p((a - 1.0) / x);
}

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

// likelihood of one observed cell on the log-mean scale; proposals that
// would overflow exp() are treated as zero-density
double cell_loglik(double y, double log_mu, double tau) {
  if (!(std::abs(log_mu) < 700.0)) return kNegInf;
  return trunc_gamma_logpdf(y, std::exp(log_mu), tau);
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = (static_cast<double>(n) - 1.0) * p + 1.0;
  const double fl = std::floor(h);
  std::size_t lo = static_cast<std::size_t>(fl) - 1;
  if (lo >= n - 1) return sorted[n - 1];
  return sorted[lo] + (h - fl) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double trunc_gamma_logpdf(double y, double mu, double tau) {
  if (!(mu > 0.0) || !(tau > 0.0))
    throw std::invalid_argument("trunc_gamma_logpdf: mu and tau must be positive");
  if (y < 1.0 || !std::isfinite(y)) return kNegInf;
  const double rate = tau / mu;
  const double log_unnorm =
      tau * std::log(rate) - std::lgamma(tau) + (tau - 1.0) * std::log(y) - rate * y;
  return log_unnorm - log_gamma_tail(tau, rate);
}

double trunc_gamma_sample(double mu, double tau, RngStream& rng) {
  if (!(mu > 0.0) || !(tau > 0.0))
    throw std::invalid_argument("trunc_gamma_sample: mu and tau must be positive");
  const double rate = tau / mu;
  const double f1 = boost::math::gamma_p(tau, rate);  // untruncated CDF at 1

  if (f1 <= 1.0 - 1e-12) {
    const double u = rng.uniform();
    const double p = f1 + u * (1.0 - f1);
    if (p < 1.0 - 1e-14) {
      const double x = boost::math::gamma_p_inv(tau, p);
      return std::max(1.0, x / rate);
    }
  }

  // tail mass too small for the inverse CDF: rejection from 1 + Exp(lambda)
  const double lambda = rate - std::max(0.0, tau - 1.0);
  while (true) {
    const double y = 1.0 + rng.exponential(lambda);
    const double log_accept = tau > 1.0
                                  ? (tau - 1.0) * (std::log(y) - (y - 1.0))
                                  : (tau - 1.0) * std::log(y);
    if (std::log(rng.uniform()) < log_accept) return y;
  }
}

double log_posterior(const ModelState& state, const PanelData& panel) {
  if (!(state.sigma2_beta > 0.0 && state.sigma2_beta < 100.0)) return kNegInf;
  if (!(state.sigma2_xi > 0.0 && state.sigma2_xi < 100.0)) return kNegInf;
  if (!(state.tau > 0.0 && state.tau < 50.0)) return kNegInf;

  const Eigen::Index n = panel.n_households(), t_len = panel.n_months();
  double lp = log_normal_pdf(state.beta0, 0.0, 100.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    lp += log_normal_pdf(state.beta(i), state.beta0, state.sigma2_beta);
    double prev = 0.0;  // w_i0 = 0
    for (Eigen::Index t = 0; t < t_len; ++t) {
      lp += log_normal_pdf(state.w(i, t) - prev, 0.0, state.sigma2_xi);
      prev = state.w(i, t);
      if (panel.observed(i, t))
        lp += cell_loglik(panel.y(i, t), state.beta(i) + state.w(i, t), state.tau);
    }
  }
  return lp;
}

namespace {

// indices into the flattened coordinate vector
struct Layout {
  Eigen::Index n, t;
  int beta0 = 0, ls2b = 1, ls2x = 2, ltau = 3;
  int beta(Eigen::Index i) const { return 4 + static_cast<int>(i); }
  int w(Eigen::Index i, Eigen::Index tt) const {
    return 4 + static_cast<int>(n) + static_cast<int>(i * t + tt);
  }
  int total() const { return 4 + static_cast<int>(n + n * t); }
};

class ChainRunner {
 public:
  ChainRunner(const PanelData& panel, const McmcSchedule& sched, std::uint64_t seed)
      : panel_(panel),
        sched_(sched),
        rng_(seed),
        layout_{panel.n_households(), panel.n_months()} {
    init_state();
    const int total = layout_.total();
    log_step_.assign(static_cast<std::size_t>(total), std::log(0.5));
    accepts_.assign(static_cast<std::size_t>(total), 0);
    attempts_.assign(static_cast<std::size_t>(total), 0);
  }

  Eigen::MatrixXd run() {
    const int stored_n = sched_.stored_per_chain();
    Eigen::MatrixXd stored(stored_n, layout_.total());
    int stored_i = 0;
    int batch = 0;
    const int total_iters = sched_.burn_in + sched_.kept;
    for (int s = 1; s <= total_iters; ++s) {
      const bool adapting = s <= sched_.burn_in;
      sweep(adapting);
      if (adapting && s % 50 == 0) adapt(++batch);
      if (!adapting) {
        const int post = s - sched_.burn_in;
        if (post % sched_.thin == 0 && stored_i < stored_n)
          store_row(stored, stored_i++);
      }
    }
    return stored;
  }

 private:
  void init_state() {
    const Eigen::Index n = layout_.n, t_len = layout_.t;
    state_.beta.resize(n);
    state_.w = Eigen::MatrixXd::Zero(n, t_len);

    double total_log = 0.0;
    long total_obs = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double hh_log = 0.0;
      long hh_obs = 0;
      for (Eigen::Index t = 0; t < t_len; ++t) {
        if (panel_.observed(i, t)) {
          hh_log += std::log(panel_.y(i, t));
          ++hh_obs;
        }
      }
      state_.beta(i) = hh_obs > 0 ? hh_log / static_cast<double>(hh_obs) : 0.0;
      total_log += hh_log;
      total_obs += hh_obs;
    }
    state_.beta0 = total_obs > 0 ? total_log / static_cast<double>(total_obs) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite(state_.beta(i))) state_.beta(i) = state_.beta0;

    const double mean_beta = state_.beta.mean();
    const double var_beta =
        n > 1 ? (state_.beta.array() - mean_beta).square().sum() /
                    static_cast<double>(n - 1)
              : 0.25;
    state_.sigma2_beta = std::clamp(var_beta, 0.01, 50.0);
    state_.sigma2_xi = 0.1;
    state_.tau = 5.0;

    cell_ll_ = Eigen::MatrixXd::Zero(n, t_len);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < t_len; ++t)
        if (panel_.observed(i, t))
          cell_ll_(i, t) =
              cell_loglik(panel_.y(i, t), state_.beta(i) + state_.w(i, t), state_.tau);

    const double lp = log_posterior(state_, panel_);
    if (!std::isfinite(lp))
      throw std::runtime_error(
          "run_mcmc: non-finite log posterior at initialization (check that all "
          "observed values are >= 1)");
  }

  bool metropolis(int coord, double delta) {
    ++attempts_[static_cast<std::size_t>(coord)];
    if (std::log(rng_.uniform()) < delta) {
      ++accepts_[static_cast<std::size_t>(coord)];
      return true;
    }
    return false;
  }

  double step(int coord) const {
    return std::exp(log_step_[static_cast<std::size_t>(coord)]);
  }

  void sweep(bool /*adapting*/) {
    update_beta0();
    update_sigma2_beta();
    update_sigma2_xi();
    update_tau();
    for (Eigen::Index i = 0; i < layout_.n; ++i) update_beta_i(i);
    for (Eigen::Index i = 0; i < layout_.n; ++i)
      for (Eigen::Index t = 0; t < layout_.t; ++t) update_w(i, t);
  }

  void update_beta0() {
    const double cur = state_.beta0;
    const double prop = cur + step(layout_.beta0) * rng_.normal();
    double delta = log_normal_pdf(prop, 0.0, 100.0) - log_normal_pdf(cur, 0.0, 100.0);
    for (Eigen::Index i = 0; i < layout_.n; ++i)
      delta += log_normal_pdf(state_.beta(i), prop, state_.sigma2_beta) -
               log_normal_pdf(state_.beta(i), cur, state_.sigma2_beta);
    if (metropolis(layout_.beta0, delta)) state_.beta0 = prop;
  }

  void update_sigma2_beta() {
    const double cur = state_.sigma2_beta;
    const double lprop = std::log(cur) + step(layout_.ls2b) * rng_.normal();
    const double prop = std::exp(lprop);
    double delta;
    if (prop >= 100.0) {
      delta = kNegInf;
    } else {
      delta = lprop - std::log(cur);  // Jacobian of the log transform
      for (Eigen::Index i = 0; i < layout_.n; ++i)
        delta += log_normal_pdf(state_.beta(i), state_.beta0, prop) -
                 log_normal_pdf(state_.beta(i), state_.beta0, cur);
    }
    if (metropolis(layout_.ls2b, delta)) state_.sigma2_beta = prop;
  }

  void update_sigma2_xi() {
    const double cur = state_.sigma2_xi;
    const double lprop = std::log(cur) + step(layout_.ls2x) * rng_.normal();
    const double prop = std::exp(lprop);
    double delta;
    if (prop >= 100.0) {
      delta = kNegInf;
    } else {
      double ss = 0.0;
      for (Eigen::Index i = 0; i < layout_.n; ++i) {
        double prev = 0.0;
        for (Eigen::Index t = 0; t < layout_.t; ++t) {
          const double d = state_.w(i, t) - prev;
          ss += d * d;
          prev = state_.w(i, t);
        }
      }
      const double m = static_cast<double>(layout_.n * layout_.t);
      delta = lprop - std::log(cur) - 0.5 * m * (lprop - std::log(cur)) -
              0.5 * ss * (1.0 / prop - 1.0 / cur);
    }
    if (metropolis(layout_.ls2x, delta)) state_.sigma2_xi = prop;
  }

  void update_tau() {
    const double cur = state_.tau;
    const double lprop = std::log(cur) + step(layout_.ltau) * rng_.normal();
    const double prop = std::exp(lprop);
    if (prop >= 50.0) {
      metropolis(layout_.ltau, kNegInf);
      return;
    }
    double delta = lprop - std::log(cur);
    Eigen::MatrixXd prop_ll = cell_ll_;
    for (Eigen::Index i = 0; i < layout_.n; ++i) {
      for (Eigen::Index t = 0; t < layout_.t; ++t) {
        if (!panel_.observed(i, t)) continue;
        prop_ll(i, t) =
            cell_loglik(panel_.y(i, t), state_.beta(i) + state_.w(i, t), prop);
        delta += prop_ll(i, t) - cell_ll_(i, t);
      }
    }
    if (metropolis(layout_.ltau, delta)) {
      state_.tau = prop;
      cell_ll_ = std::move(prop_ll);
    }
  }

  void update_beta_i(Eigen::Index i) {
    const int coord = layout_.beta(i);
    const double cur = state_.beta(i);
    const double prop = cur + step(coord) * rng_.normal();
    double delta = log_normal_pdf(prop, state_.beta0, state_.sigma2_beta) -
                   log_normal_pdf(cur, state_.beta0, state_.sigma2_beta);
    Eigen::VectorXd prop_ll(layout_.t);
    for (Eigen::Index t = 0; t < layout_.t; ++t) {
      if (!panel_.observed(i, t)) continue;
      prop_ll(t) = cell_loglik(panel_.y(i, t), prop + state_.w(i, t), state_.tau);
      delta += prop_ll(t) - cell_ll_(i, t);
    }
    if (metropolis(coord, delta)) {
      state_.beta(i) = prop;
      for (Eigen::Index t = 0; t < layout_.t; ++t)
        if (panel_.observed(i, t)) cell_ll_(i, t) = prop_ll(t);
    }
  }

  void update_w(Eigen::Index i, Eigen::Index t) {
    const int coord = layout_.w(i, t);
    const double cur = state_.w(i, t);
    const double prop = cur + step(coord) * rng_.normal();
    const double prev = t > 0 ? state_.w(i, t - 1) : 0.0;

    double delta = log_normal_pdf(prop - prev, 0.0, state_.sigma2_xi) -
                   log_normal_pdf(cur - prev, 0.0, state_.sigma2_xi);
    if (t + 1 < layout_.t) {
      const double next = state_.w(i, t + 1);
      delta += log_normal_pdf(next - prop, 0.0, state_.sigma2_xi) -
               log_normal_pdf(next - cur, 0.0, state_.sigma2_xi);
    }
    double new_ll = 0.0;
    const bool obs = panel_.observed(i, t);
    if (obs) {
      new_ll = cell_loglik(panel_.y(i, t), state_.beta(i) + prop, state_.tau);
      delta += new_ll - cell_ll_(i, t);
    }
    if (metropolis(coord, delta)) {
      state_.w(i, t) = prop;
      if (obs) cell_ll_(i, t) = new_ll;
    }
  }

  void adapt(int batch) {
    const double d = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch)));
    for (std::size_t c = 0; c < log_step_.size(); ++c) {
      if (attempts_[c] == 0) continue;
      const double rate =
          static_cast<double>(accepts_[c]) / static_cast<double>(attempts_[c]);
      log_step_[c] += rate > 0.44 ? d : -d;
      accepts_[c] = 0;
      attempts_[c] = 0;
    }
  }

  void store_row(Eigen::MatrixXd& stored, int r) {
    stored(r, 0) = state_.beta0;
    stored(r, 1) = state_.sigma2_beta;
    stored(r, 2) = state_.sigma2_xi;
    stored(r, 3) = state_.tau;
    for (Eigen::Index i = 0; i < layout_.n; ++i)
      stored(r, layout_.beta(i)) = state_.beta(i);
    for (Eigen::Index i = 0; i < layout_.n; ++i)
      for (Eigen::Index t = 0; t < layout_.t; ++t)
        stored(r, layout_.w(i, t)) = state_.w(i, t);
  }

  const PanelData& panel_;
  McmcSchedule sched_;
  RngStream rng_;
  Layout layout_;
  ModelState state_;
  Eigen::MatrixXd cell_ll_;
  std::vector<double> log_step_;
  std::vector<int> accepts_, attempts_;
};

}  // namespace

PosteriorDraws run_mcmc(const PanelData& panel, const McmcSchedule& schedule,
                        std::uint64_t master_seed) {
  if (panel.n_households() < 1 || panel.n_months() < 2)
    throw std::invalid_argument("run_mcmc: need N >= 1 households and T >= 2 months");
  if (schedule.burn_in < 0 || schedule.kept < 1 || schedule.thin < 1 ||
      schedule.chains < 1)
    throw std::invalid_argument("run_mcmc: invalid schedule");

  PosteriorDraws out;
  out.schedule = schedule;
  out.master_seed = master_seed;
  out.n = panel.n_households();
  out.t = panel.n_months();
  out.chain_draws.resize(static_cast<std::size_t>(schedule.chains));
  out.chain_seeds.resize(static_cast<std::size_t>(schedule.chains));

  out.param_names = {"beta0", "sigma2_beta", "sigma2_xi", "tau"};
  for (Eigen::Index i = 0; i < out.n; ++i)
    out.param_names.push_back(
        "beta[" + panel.household_ids[static_cast<std::size_t>(i)] + "]");
  for (Eigen::Index i = 0; i < out.n; ++i)
    for (Eigen::Index t = 0; t < out.t; ++t)
      out.param_names.push_back(
          "w[" + panel.household_ids[static_cast<std::size_t>(i)] + "," +
          panel.months[static_cast<std::size_t>(t)].to_string() + "]");

  // validate initialization once up front so the error surfaces on the
  // caller's thread
  {
    ChainRunner probe(panel, schedule, derive_seed(master_seed, "chain", 0));
    (void)probe;
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(schedule.chains));
  for (int c = 0; c < schedule.chains; ++c) {
    out.chain_seeds[static_cast<std::size_t>(c)] =
        derive_seed(master_seed, "chain", static_cast<std::uint64_t>(c));
    workers.emplace_back([&, c] {
      try {
        ChainRunner runner(panel, schedule,
                           out.chain_seeds[static_cast<std::size_t>(c)]);
        out.chain_draws[static_cast<std::size_t>(c)] = runner.run();
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

std::vector<Eigen::VectorXd> split_in_half(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> seqs;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    if (half < 2) return {};  // too short to split meaningfully
    seqs.push_back(c.head(half));
    seqs.push_back(c.segment(half, half));
  }
  return seqs;
}

struct VarComponents {
  double w = 0.0;        // mean within-sequence variance
  double var_plus = 0.0; // marginal posterior variance estimate
  double mean_c0 = 0.0;
  std::vector<double> seq_means;
  Eigen::Index len = 0;
};

VarComponents variance_components(const std::vector<Eigen::VectorXd>& seqs) {
  VarComponents vc;
  const std::size_t m = seqs.size();
  vc.len = seqs[0].size();
  const double dl = static_cast<double>(vc.len);
  double grand = 0.0;
  for (const auto& s : seqs) {
    const double mu = s.mean();
    vc.seq_means.push_back(mu);
    vc.w += (s.array() - mu).square().sum() / (dl - 1.0);
    grand += mu;
  }
  vc.w /= static_cast<double>(m);
  grand /= static_cast<double>(m);
  double b = 0.0;
  for (double mu : vc.seq_means) b += (mu - grand) * (mu - grand);
  b = m > 1 ? b * dl / static_cast<double>(m - 1) : 0.0;
  vc.var_plus = (dl - 1.0) / dl * vc.w + b / dl;
  return vc;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const auto seqs = split_in_half(chains);
  if (seqs.size() < 2) return 1.0;
  const auto vc = variance_components(seqs);
  if (vc.w <= 0.0) return 1.0;
  return std::sqrt(vc.var_plus / vc.w);
}

double rank_normalized_ess(const std::vector<Eigen::VectorXd>& chains) {
  // pooled average ranks -> normal scores
  struct Item {
    double v;
    std::size_t chain;
    Eigen::Index idx;
  };
  std::vector<Item> items;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < chains[c].size(); ++i)
      items.push_back({chains[c](i), c, i});
  const std::size_t total = items.size();
  if (total == 0) return 0.0;
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.v < b.v; });

  std::vector<Eigen::VectorXd> z(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) z[c].resize(chains[c].size());
  const boost::math::normal_distribution<> std_normal;
  std::size_t pos = 0;
  bool all_tied = true;
  while (pos < total) {
    std::size_t end = pos;
    while (end + 1 < total && items[end + 1].v == items[pos].v) ++end;
    if (!(pos == 0 && end == total - 1)) all_tied = false;
    const double avg_rank = (static_cast<double>(pos) + static_cast<double>(end)) / 2.0 + 1.0;
    const double p = (avg_rank - 0.375) / (static_cast<double>(total) + 0.25);
    const double zv = boost::math::quantile(std_normal, p);
    for (std::size_t k = pos; k <= end; ++k) z[items[k].chain](items[k].idx) = zv;
    pos = end + 1;
  }
  if (all_tied) return static_cast<double>(total);  // constant draws

  const auto seqs = split_in_half(z);
  if (seqs.size() < 2) return static_cast<double>(total);
  const auto vc = variance_components(seqs);
  if (vc.var_plus <= 0.0 || vc.w <= 0.0) return static_cast<double>(total);

  const std::size_t m = seqs.size();
  const Eigen::Index len = vc.len;
  std::vector<Eigen::VectorXd> centered(m);
  for (std::size_t j = 0; j < m; ++j)
    centered[j] = seqs[j].array() - vc.seq_means[j];

  // lag-t autocorrelation estimate, computed on demand (Geyer's rule
  // usually stops after a handful of lags)
  auto rho = [&](Eigen::Index lag) {
    double mean_c = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const Eigen::Index k = len - lag;
      mean_c += centered[j].head(k).dot(centered[j].tail(k)) /
                static_cast<double>(len);
    }
    mean_c /= static_cast<double>(m);
    return 1.0 - (vc.w - mean_c) / vc.var_plus;
  };

  // Geyer initial monotone positive sequence over paired sums
  double tau = -1.0 + 2.0 * rho(0);
  double prev_pair = rho(0) + (len > 1 ? rho(1) : 0.0);
  if (prev_pair > 0.0) tau = -1.0 + 2.0 * prev_pair;
  for (Eigen::Index lag = 2; lag + 1 < len; lag += 2) {
    double pair = rho(lag) + rho(lag + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(total) + 10.0));
  return static_cast<double>(m) * static_cast<double>(len) / tau;
}

namespace {

Eigen::VectorXd pooled_column(const PosteriorDraws& draws, Eigen::Index col) {
  Eigen::Index total = 0;
  for (const auto& c : draws.chain_draws) total += c.rows();
  Eigen::VectorXd v(total);
  Eigen::Index at = 0;
  for (const auto& c : draws.chain_draws) {
    v.segment(at, c.rows()) = c.col(col);
    at += c.rows();
  }
  return v;
}

std::vector<Eigen::VectorXd> per_chain_column(const PosteriorDraws& draws,
                                              Eigen::Index col) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : draws.chain_draws) out.push_back(c.col(col));
  return out;
}

ScalarDiagnostic scalar_diag(const PosteriorDraws& draws, Eigen::Index col) {
  ScalarDiagnostic d;
  d.name = draws.param_names[static_cast<std::size_t>(col)];
  const Eigen::VectorXd pooled = pooled_column(draws, col);
  d.mean = pooled.mean();
  std::vector<double> sorted(pooled.data(), pooled.data() + pooled.size());
  std::sort(sorted.begin(), sorted.end());
  d.q2_5 = quantile_sorted(sorted, 0.025);
  d.q97_5 = quantile_sorted(sorted, 0.975);
  const auto chains = per_chain_column(draws, col);
  d.rhat = split_rhat(chains);
  d.ess = rank_normalized_ess(chains);
  return d;
}

}  // namespace

PosteriorSummary summarize(const PosteriorDraws& draws) {
  if (draws.chain_draws.size() < 2)
    throw std::invalid_argument("summarize: need at least 2 chains");

  PosteriorSummary out;
  for (Eigen::Index c = 0; c < draws.param_count(); ++c)
    out.scalars.push_back(scalar_diag(draws, c));
  out.hyperparams.assign(out.scalars.begin(), out.scalars.begin() + 4);

  const Eigen::Index n = draws.n, t_len = draws.t;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Eigen::Index bcol = 4 + i;
      const Eigen::Index wcol = 4 + n + i * t_len + t;
      std::vector<double> mu;
      for (const auto& cd : draws.chain_draws)
        for (Eigen::Index r = 0; r < cd.rows(); ++r)
          mu.push_back(std::exp(cd(r, bcol) + cd(r, wcol)));
      std::sort(mu.begin(), mu.end());
      CellSummary cell;
      cell.i = i;
      cell.t = t;
      double acc = 0.0;
      for (double v : mu) acc += v;
      cell.post_mean = acc / static_cast<double>(mu.size());
      cell.ci_lo = quantile_sorted(mu, 0.025);
      cell.ci_hi = quantile_sorted(mu, 0.975);
      out.cells.push_back(cell);
    }
  }
  return out;
}

std::string draws_to_csv(const PosteriorDraws& draws) {
  std::string out = "chain,iteration,parameter,value\n";
  for (std::size_t c = 0; c < draws.chain_draws.size(); ++c) {
    const auto& m = draws.chain_draws[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const long iter = draws.schedule.burn_in +
                        (static_cast<long>(r) + 1) * draws.schedule.thin;
      for (Eigen::Index p = 0; p < m.cols(); ++p) {
        out += std::to_string(c + 1);
        out += ',';
        out += std::to_string(iter);
        out += ',';
        out += draws.param_names[static_cast<std::size_t>(p)];
        out += ',';
        out += csv::format_double(m(r, p));
        out += '\n';
      }
    }
  }
  return out;
}

std::string summary_to_csv(const PosteriorSummary& summary, const PanelData& panel) {
  std::string out = "household_id,month,post_mean,ci_lo,ci_hi\n";
  for (const auto& cell : summary.cells) {
    out += panel.household_ids[static_cast<std::size_t>(cell.i)];
    out += ',';
    out += panel.months[static_cast<std::size_t>(cell.t)].to_string();
    out += ',';
    out += csv::format_double(cell.post_mean);
    out += ',';
    out += csv::format_double(cell.ci_lo);
    out += ',';
    out += csv::format_double(cell.ci_hi);
    out += '\n';
  }
  return out;
}

std::string plot_data_to_csv(const PosteriorSummary& summary, const PanelData& panel) {
  std::string out = "household_id,month,point_estimate,post_mean,ci_lo,ci_hi\n";
  for (const auto& cell : summary.cells) {
    out += panel.household_ids[static_cast<std::size_t>(cell.i)];
    out += ',';
    out += panel.months[static_cast<std::size_t>(cell.t)].to_string();
    out += ',';
    if (panel.observed(cell.i, cell.t))
      out += csv::format_double(panel.y(cell.i, cell.t));
    out += ',';
    out += csv::format_double(cell.post_mean);
    out += ',';
    out += csv::format_double(cell.ci_lo);
    out += ',';
    out += csv::format_double(cell.ci_hi);
    out += '\n';
  }
  return out;
}

std::string diagnostics_to_csv(const PosteriorSummary& summary) {
  std::string out = "parameter,rhat,ess\n";
  for (const auto& s : summary.scalars) {
    out += s.name;
    out += ',';
    out += csv::format_double(s.rhat);
    out += ',';
    out += csv::format_double(s.ess);
    out += '\n';
  }
  return out;
}

}  // namespace tvprof
