#include "tvprof/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace tvprof {

const std::array<const char*, kNumFeatures> kFeatureNames = {
    "transitions_number",
    "transitions_channels",
    "transitions_absorbing_states",
    "program_ratio_average",
    "program_ratio_median",
    "program_ratio_sd",
    "program_ratio_skewness",
    "program_ratio_kurtosis",
    "program_ratio_q2.5",
    "program_ratio_q97.5",
    "session_duration_average",
    "session_duration_median",
    "session_duration_sd",
    "session_duration_skewness",
    "session_duration_kurtosis",
    "session_duration_q2.5",
    "session_duration_q97.5",
};

TransitionFeatures transition_features(std::span<const SessionRecord> sessions) {
  if (sessions.empty()) throw std::invalid_argument("transition_features: empty unit");

  std::set<std::string> channels;
  std::map<std::string, long> outgoing;
  long transitions = 0;
  for (const auto& s : sessions) {
    for (const auto& c : s.channel_sequence) channels.insert(c);
    for (std::size_t i = 0; i + 1 < s.channel_sequence.size(); ++i) {
      ++outgoing[s.channel_sequence[i]];
      ++transitions;
    }
  }

  TransitionFeatures f;
  f.n_transitions = transitions;
  f.n_channels = static_cast<long>(channels.size());
  for (const auto& c : channels) {
    auto it = outgoing.find(c);
    if (it == outgoing.end() || it->second == 0) ++f.n_absorbing;
  }
  return f;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = (static_cast<double>(n) - 1.0) * p + 1.0;  // 1-based position
  const double fl = std::floor(h);
  std::size_t lo = static_cast<std::size_t>(fl) - 1;
  if (lo >= n - 1) return sorted[n - 1];
  return sorted[lo] + (h - fl) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

StatSeven stat_seven(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("stat_seven: empty input");
  const std::size_t n = values.size();
  const double dn = static_cast<double>(n);

  StatSeven s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / dn;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;

  s.sd = n > 1 ? std::sqrt(m2 * dn / (dn - 1.0)) : 0.0;
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
  } else {
    s.skewness = 0.0;
    s.kurtosis = 0.0;
    s.degenerate = true;
  }

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile_sorted(sorted, 0.5);
  s.q2_5 = quantile_sorted(sorted, 0.025);
  s.q97_5 = quantile_sorted(sorted, 0.975);
  return s;
}

namespace {

struct Unit {
  std::string id;
  std::vector<SessionRecord> sessions;
};

std::vector<Unit> partition_units(const HouseholdMonth& hm, const AggregationRule& rule) {
  std::vector<Unit> units;
  if (rule.unit == AggregationUnit::kCalendarDay) {
    std::map<int, Unit> by_day;
    for (const auto& s : hm.sessions) {
      auto& u = by_day[s.start_time.day];
      if (u.id.empty()) {
        Timestamp t = s.start_time;
        u.id = t.to_iso8601().substr(0, 10);  // YYYY-MM-DD
      }
      u.sessions.push_back(s);
    }
    for (auto& [day, u] : by_day) units.push_back(std::move(u));
  } else {
    if (rule.window_size < 1)
      throw std::invalid_argument("build_feature_matrix: window_size must be >= 1");
    const std::size_t w = static_cast<std::size_t>(rule.window_size);
    for (std::size_t start = 0; start < hm.sessions.size(); start += w) {
      Unit u;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "w%03zu", units.size() + 1);
      u.id = buf;
      const std::size_t end = std::min(start + w, hm.sessions.size());
      u.sessions.assign(hm.sessions.begin() + static_cast<std::ptrdiff_t>(start),
                        hm.sessions.begin() + static_cast<std::ptrdiff_t>(end));
      units.push_back(std::move(u));
    }
  }
  return units;
}

}  // namespace

FeatureMatrix build_feature_matrix(const HouseholdMonth& hm,
                                   const AggregationRule& rule) {
  const auto units = partition_units(hm, rule);

  FeatureMatrix fm;
  std::vector<std::array<double, kNumFeatures>> rows;
  for (const auto& u : units) {
    if (u.sessions.empty()) continue;
    std::vector<double> ratios;
    std::vector<double> durations;
    for (const auto& s : u.sessions) {
      for (const auto& pw : s.program_watches) ratios.push_back(pw.ratio);
      durations.push_back(s.duration_seconds);
    }
    if (ratios.empty()) {
      // no program-ratio observations: the 17-feature contract cannot be met
      fm.skipped_units.push_back(u.id);
      continue;
    }
    const auto tf = transition_features(u.sessions);
    const auto rs = stat_seven(ratios);
    const auto ds = stat_seven(durations);

    std::array<double, kNumFeatures> row;
    row[0] = static_cast<double>(tf.n_transitions);
    row[1] = static_cast<double>(tf.n_channels);
    row[2] = static_cast<double>(tf.n_absorbing);
    const auto ra = rs.as_array();
    const auto da = ds.as_array();
    std::copy(ra.begin(), ra.end(), row.begin() + 3);
    std::copy(da.begin(), da.end(), row.begin() + 10);
    rows.push_back(row);
    fm.unit_ids.push_back(u.id);
  }

  if (rows.size() < 2)
    throw std::runtime_error("build_feature_matrix: insufficient observations (" +
                             std::to_string(rows.size()) + " usable units)");

  fm.values.resize(static_cast<Eigen::Index>(rows.size()), kNumFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < kNumFeatures; ++j)
      fm.values(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return fm;
}

StandardizedMatrix standardize(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw std::invalid_argument("standardize: need at least 2 rows");

  StandardizedMatrix out;
  out.scaling.mean = x.colwise().mean();
  out.scaling.sd.resize(d);
  out.scaling.constant_cols.assign(static_cast<std::size_t>(d), false);
  out.values.resize(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd centered = x.col(j).array() - out.scaling.mean(j);
    const double var = centered.squaredNorm() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      out.scaling.sd(j) = sd;
      out.values.col(j) = centered / sd;
    } else {
      out.scaling.sd(j) = 1.0;
      out.scaling.constant_cols[static_cast<std::size_t>(j)] = true;
      out.values.col(j).setZero();
    }
  }
  return out;
}

Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& z, const Standardization& s) {
  Eigen::MatrixXd x = z;
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    x.col(j) = z.col(j).array() * s.sd(j) + s.mean(j);
  return x;
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x,
                                      const Standardization& s) {
  if (x.cols() != s.mean.size())
    throw std::invalid_argument("apply_standardization: column count mismatch");
  Eigen::MatrixXd z = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    z.col(j).array() -= s.mean(j);
    if (s.constant_cols[static_cast<std::size_t>(j)])
      z.col(j).setZero();
    else
      z.col(j) /= s.sd(j);
  }
  return z;
}

}  // namespace tvprof
