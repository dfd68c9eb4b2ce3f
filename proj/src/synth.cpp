#include "tvprof/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

#include "tvprof/csv.hpp"

namespace tvprof {

void ProfileSpec::validate() const {
  if (channels.empty()) throw std::invalid_argument("ProfileSpec: no channels");
  if (transition.rows() != static_cast<Eigen::Index>(channels.size()) ||
      transition.cols() != transition.rows())
    throw std::invalid_argument("ProfileSpec: transition matrix shape mismatch");
  for (Eigen::Index i = 0; i < transition.rows(); ++i) {
    if ((transition.row(i).array() < 0.0).any() ||
        std::abs(transition.row(i).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("ProfileSpec: transition rows must sum to 1");
  }
  if (!(duration_sdlog >= 0.0) || !(ratio_alpha > 0.0) || !(ratio_beta > 0.0) ||
      !(sessions_per_day > 0.0) || !(seq_len_mean >= 0.0) || !(programs_mean >= 0.0))
    throw std::invalid_argument("ProfileSpec: nonpositive distribution parameter");
}

void HouseholdSpec::validate() const {
  if (profiles.empty()) throw std::invalid_argument("HouseholdSpec: no profiles");
  if (selection_probs.size() != profiles.size())
    throw std::invalid_argument("HouseholdSpec: selection_probs size mismatch");
  double sum = 0.0;
  for (double p : selection_probs) {
    if (p < 0.0) throw std::invalid_argument("HouseholdSpec: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("HouseholdSpec: selection_probs must sum to 1");
  for (const auto& p : profiles) p.validate();
}

namespace {

double beta_draw(double a, double b, RngStream& rng) {
  double u = rng.uniform();
  u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
  return boost::math::ibeta_inv(a, b, u);
}

SessionRecord make_session(const std::string& household_id, const ProfileSpec& prof,
                           YearMonth ym, int day, long& program_counter,
                           RngStream& rng) {
  SessionRecord rec;
  rec.household_id = household_id;
  rec.start_time.year = ym.year;
  rec.start_time.month = ym.month;
  rec.start_time.day = day;
  rec.start_time.hour = static_cast<int>(rng.uniform() * 24.0);
  rec.start_time.minute = static_cast<int>(rng.uniform() * 60.0);
  rec.start_time.second = static_cast<int>(rng.uniform() * 60.0);

  const int len = 1 + rng.poisson(prof.seq_len_mean);
  const std::size_t n_chan = prof.channels.size();
  std::size_t ch = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_chan));
  ch = std::min(ch, n_chan - 1);
  rec.channel_sequence.push_back(prof.channels[ch]);
  for (int s = 1; s < len; ++s) {
    const Eigen::VectorXd row = prof.transition.row(static_cast<Eigen::Index>(ch));
    ch = rng.categorical(std::span<const double>(row.data(),
                                                 static_cast<std::size_t>(row.size())));
    rec.channel_sequence.push_back(prof.channels[ch]);
  }

  const int n_prog = 1 + rng.poisson(prof.programs_mean);
  for (int p = 0; p < n_prog; ++p) {
    ProgramWatch pw;
    pw.program_id = "p" + std::to_string(++program_counter);
    pw.ratio = beta_draw(prof.ratio_alpha, prof.ratio_beta, rng);
    rec.program_watches.push_back(std::move(pw));
  }

  rec.duration_seconds =
      std::exp(rng.normal(prof.duration_meanlog, prof.duration_sdlog));
  return rec;
}

}  // namespace

SyntheticSessions gen_sessions(const std::vector<HouseholdSpec>& specs,
                               std::uint64_t seed) {
  SyntheticSessions out;
  for (const auto& hh : specs) {
    hh.validate();
    RngStream rng(derive_seed(seed, hh.household_id));
    long program_counter = 0;
    for (const auto& ym : hh.months) {
      std::set<std::size_t> used;
      const int n_days = days_in_month(ym.year, ym.month);
      for (int day = 1; day <= n_days; ++day) {
        const std::size_t prof_idx = rng.categorical(hh.selection_probs);
        used.insert(prof_idx);
        const auto& prof = hh.profiles[prof_idx];
        const int n_sessions = std::max(1, rng.poisson(prof.sessions_per_day));
        for (int s = 0; s < n_sessions; ++s)
          out.sessions.push_back(
              make_session(hh.household_id, prof, ym, day, program_counter, rng));
      }
      out.truth.push_back({hh.household_id, ym, static_cast<int>(used.size())});
    }
  }
  return out;
}

std::string SyntheticSessions::to_csv() const {
  std::string out(kSessionCsvHeader);
  out += '\n';
  for (const auto& s : sessions) {
    out += serialize_session(s);
    out += '\n';
  }
  return out;
}

std::string truth_to_csv(const std::vector<MonthTruth>& truth) {
  std::string out = "household_id,month,true_k\n";
  for (const auto& t : truth) {
    out += t.household_id;
    out += ',';
    out += t.month.to_string();
    out += ',';
    out += std::to_string(t.true_k);
    out += '\n';
  }
  return out;
}

SyntheticPanel gen_panel(const PanelHyperparams& hyper, int n_households,
                         int n_months, double missing_rate, std::uint64_t seed) {
  if (n_households < 1 || n_months < 1)
    throw std::invalid_argument("gen_panel: need positive dimensions");
  if (!(hyper.sigma_beta >= 0.0) || !(hyper.sigma_xi >= 0.0) || !(hyper.tau > 0.0))
    throw std::invalid_argument("gen_panel: hyperparameters out of support");

  RngStream rng(derive_seed(seed, "panel"));
  SyntheticPanel out;
  out.truth.hyper = hyper;
  out.truth.beta.resize(n_households);
  out.truth.w.resize(n_households, n_months);
  out.truth.mu.resize(n_households, n_months);

  out.panel.y.resize(n_households, n_months);
  for (int i = 0; i < n_households; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "hh%03d", i + 1);
    out.panel.household_ids.emplace_back(buf);
  }
  YearMonth ym{2021, 1};
  for (int t = 0; t < n_months; ++t) {
    out.panel.months.push_back(ym);
    ++ym.month;
    if (ym.month > 12) {
      ym.month = 1;
      ++ym.year;
    }
  }

  for (int i = 0; i < n_households; ++i) {
    out.truth.beta(i) = rng.normal(hyper.beta0, hyper.sigma_beta);
    double w = 0.0;
    for (int t = 0; t < n_months; ++t) {
      w += hyper.sigma_xi > 0.0 ? rng.normal(0.0, hyper.sigma_xi) : 0.0;
      out.truth.w(i, t) = w;
      out.truth.mu(i, t) = std::exp(out.truth.beta(i) + w);
      const double y = trunc_gamma_sample(out.truth.mu(i, t), hyper.tau, rng);
      const bool missing = rng.uniform() < missing_rate;
      out.panel.y(i, t) = missing ? std::numeric_limits<double>::quiet_NaN() : y;
    }
  }
  return out;
}

ProfileSpec archetype_profile(int index) {
  ProfileSpec p;
  const int which = index % 4;
  const std::string prefix(1, static_cast<char>('A' + which));
  auto uniform_offdiag = [](int m, double stay) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Constant(
        m, m, m > 1 ? (1.0 - stay) / static_cast<double>(m - 1) : 0.0);
    for (int i = 0; i < m; ++i) t(i, i) = m > 1 ? stay : 1.0;
    return t;
  };
  switch (which) {
    case 0:  // rapid channel-hopper, short sessions
      p.channels = {prefix + "1", prefix + "2", prefix + "3", prefix + "4"};
      p.transition = uniform_offdiag(4, 0.1);
      p.duration_meanlog = std::log(600.0);
      p.ratio_alpha = 2.0;
      p.ratio_beta = 6.0;
      p.sessions_per_day = 5.0;
      p.seq_len_mean = 5.0;
      break;
    case 1:  // steady viewer, hour-long sessions
      p.channels = {prefix + "1", prefix + "2", prefix + "3"};
      p.transition = uniform_offdiag(3, 0.3);
      p.duration_meanlog = std::log(3600.0);
      p.ratio_alpha = 5.0;
      p.ratio_beta = 5.0;
      p.sessions_per_day = 3.0;
      p.seq_len_mean = 2.0;
      break;
    case 2:  // long-form viewer, little switching
      p.channels = {prefix + "1", prefix + "2"};
      p.transition = uniform_offdiag(2, 0.5);
      p.duration_meanlog = std::log(10800.0);
      p.ratio_alpha = 8.0;
      p.ratio_beta = 2.0;
      p.sessions_per_day = 2.0;
      p.seq_len_mean = 0.3;
      break;
    default:  // casual browser
      p.channels = {prefix + "1", prefix + "2", prefix + "3"};
      p.transition = uniform_offdiag(3, 0.2);
      p.duration_meanlog = std::log(1500.0);
      p.ratio_alpha = 1.5;
      p.ratio_beta = 1.5;
      p.sessions_per_day = 4.0;
      p.seq_len_mean = 3.0;
      break;
  }
  p.duration_sdlog = 0.3;
  p.programs_mean = 1.0;
  return p;
}

std::vector<HouseholdSpec> make_default_specs(int n_households, YearMonth first_month,
                                              int n_months, int max_profiles,
                                              double missing_rate,
                                              std::uint64_t seed) {
  if (n_households < 1 || n_months < 1 || max_profiles < 1 || max_profiles > 4)
    throw std::invalid_argument("make_default_specs: bad arguments");

  std::vector<YearMonth> all_months;
  YearMonth ym = first_month;
  for (int t = 0; t < n_months; ++t) {
    all_months.push_back(ym);
    ++ym.month;
    if (ym.month > 12) {
      ym.month = 1;
      ++ym.year;
    }
  }

  std::vector<HouseholdSpec> specs;
  for (int i = 0; i < n_households; ++i) {
    HouseholdSpec hh;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "hh%03d", i + 1);
    hh.household_id = buf;
    const int k = 1 + i % max_profiles;
    for (int j = 0; j < k; ++j) hh.profiles.push_back(archetype_profile(j));
    hh.selection_probs.assign(static_cast<std::size_t>(k),
                              1.0 / static_cast<double>(k));
    RngStream rng(derive_seed(seed, "months", static_cast<std::uint64_t>(i)));
    for (const auto& m : all_months)
      if (rng.uniform() >= missing_rate) hh.months.push_back(m);
    if (hh.months.empty()) hh.months.push_back(all_months.front());
    specs.push_back(std::move(hh));
  }
  return specs;
}

}  // namespace tvprof
