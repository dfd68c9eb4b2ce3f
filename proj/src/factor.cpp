#include "tvprof/factor.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tvprof/csv.hpp"

namespace tvprof {

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x) {
  const auto std = standardize(x);
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd r =
      (std.values.transpose() * std.values) / static_cast<double>(x.rows() - 1);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (std.scaling.constant_cols[static_cast<std::size_t>(j)]) {
      r.row(j).setZero();
      r.col(j).setZero();
    }
    r(j, j) = 1.0;
  }
  return r;
}

EigenAnalysis choose_n_factors(const Eigen::MatrixXd& corr) {
  if (!corr.allFinite())
    throw std::invalid_argument("choose_n_factors: non-finite correlation matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  EigenAnalysis out;
  out.eigenvalues = es.eigenvalues().reverse();
  const double total = out.eigenvalues.sum();
  out.cumulative_variance.resize(out.eigenvalues.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
    acc += out.eigenvalues(i);
    out.cumulative_variance(i) = acc / total;
  }
  out.k = static_cast<int>((out.eigenvalues.array() > 1.0).count());
  if (out.k == 0) {
    out.k = 1;
    out.fallback = true;
  }
  return out;
}

namespace {

// squared multiple correlations from the (regularized) inverse correlation
Eigen::VectorXd smc_communalities(const Eigen::MatrixXd& r) {
  const Eigen::Index p = r.rows();
  Eigen::MatrixXd reg = r + 1e-8 * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd rinv = reg.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd h2(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double v = 1.0 - 1.0 / rinv(j, j);
    h2(j) = std::clamp(v, 0.0, 0.995);
  }
  return h2;
}

// top-k principal-axis loadings of the reduced correlation matrix
Eigen::MatrixXd principal_axis_loadings(const Eigen::MatrixXd& reduced, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
  const Eigen::Index p = reduced.rows();
  Eigen::MatrixXd loadings(p, k);
  for (int f = 0; f < k; ++f) {
    const Eigen::Index idx = p - 1 - f;  // descending order
    const double ev = std::max(es.eigenvalues()(idx), 0.0);
    loadings.col(f) = es.eigenvectors().col(idx) * std::sqrt(ev);
  }
  return loadings;
}

double offdiag_residual_norm(const Eigen::MatrixXd& r, const Eigen::MatrixXd& loadings) {
  const Eigen::MatrixXd res = r - loadings * loadings.transpose();
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j)
      if (i != j) s += res(i, j) * res(i, j);
  return std::sqrt(s);
}

void fix_column_signs(Eigen::MatrixXd& loadings) {
  for (Eigen::Index f = 0; f < loadings.cols(); ++f) {
    Eigen::Index arg = 0;
    loadings.col(f).cwiseAbs().maxCoeff(&arg);
    if (loadings(arg, f) < 0.0) loadings.col(f) = -loadings.col(f);
  }
}

}  // namespace

Eigen::MatrixXd varimax_rotate(const Eigen::MatrixXd& loadings) {
  Eigen::MatrixXd l = loadings;
  const Eigen::Index p = l.rows();
  const int k = static_cast<int>(l.cols());
  if (k < 2) return l;

  const double dp = static_cast<double>(p);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double max_angle = 0.0;
    for (int f1 = 0; f1 < k - 1; ++f1) {
      for (int f2 = f1 + 1; f2 < k; ++f2) {
        const Eigen::VectorXd u =
            l.col(f1).array().square() - l.col(f2).array().square();
        const Eigen::VectorXd v = 2.0 * l.col(f1).array() * l.col(f2).array();
        const double a = u.sum();
        const double b = v.sum();
        const double c = (u.array().square() - v.array().square()).sum();
        const double d = 2.0 * (u.array() * v.array()).sum();
        const double num = d - 2.0 * a * b / dp;
        const double den = c - (a * a - b * b) / dp;
        const double phi = 0.25 * std::atan2(num, den);
        if (std::abs(phi) < 1e-12) continue;
        max_angle = std::max(max_angle, std::abs(phi));
        const double cs = std::cos(phi), sn = std::sin(phi);
        const Eigen::VectorXd c1 = cs * l.col(f1) + sn * l.col(f2);
        const Eigen::VectorXd c2 = -sn * l.col(f1) + cs * l.col(f2);
        l.col(f1) = c1;
        l.col(f2) = c2;
      }
    }
    if (max_angle < 1e-10) break;
  }
  return l;
}

EfaModel fit_efa(const Eigen::MatrixXd& x, int k) {
  if (k < 1) throw std::invalid_argument("fit_efa: k must be >= 1");
  if (x.rows() < 3 * static_cast<Eigen::Index>(k))
    throw std::invalid_argument("fit_efa: need at least 3k rows");

  EfaModel model;
  model.n_factors = k;
  const auto std = standardize(x);
  model.scaling = std.scaling;
  const Eigen::MatrixXd r = correlation_matrix(x);
  const Eigen::Index p = r.rows();

  Eigen::VectorXd h2 = smc_communalities(r);
  Eigen::MatrixXd loadings;
  bool converged = false;
  int iter = 0;
  for (; iter < 200; ++iter) {
    Eigen::MatrixXd reduced = r;
    reduced.diagonal() = h2;
    loadings = principal_axis_loadings(reduced, k);
    model.offdiag_objective_trace.push_back(offdiag_residual_norm(r, loadings));

    Eigen::VectorXd h2_new = loadings.array().square().rowwise().sum();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (h2_new(j) > 1.0) {
        h2_new(j) = 0.995;  // Heywood case
        model.heywood = true;
      }
    }
    const double delta = (h2_new - h2).cwiseAbs().maxCoeff();
    h2 = h2_new;
    if (delta < 1e-6) {
      converged = true;
      ++iter;
      break;
    }
  }
  model.iterations = iter;
  model.converged = converged;

  loadings = varimax_rotate(loadings);
  fix_column_signs(loadings);
  model.loadings = loadings;
  model.uniquenesses = (1.0 - loadings.array().square().rowwise().sum()).cwiseMax(0.0);
  model.explained_variance_fraction =
      loadings.array().square().sum() / static_cast<double>(p);

  // regression (Thomson) score coefficients R^-1 Lambda
  Eigen::MatrixXd reg = r + 1e-8 * Eigen::MatrixXd::Identity(p, p);
  model.score_coef = reg.ldlt().solve(model.loadings);

  if (!converged) throw EfaNonConvergence(std::move(model));
  return model;
}

Eigen::MatrixXd factor_scores(const EfaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.scaling.mean.size())
    throw std::invalid_argument("factor_scores: column count mismatch with model");
  const Eigen::MatrixXd z = apply_standardization(x, model.scaling);
  return z * model.score_coef;
}

namespace {

struct FeatureLabel {
  const char* source;
  const char* feature;
};

FeatureLabel feature_label(int index) {
  static constexpr const char* kStatNames[7] = {
      "Average", "Median", "Sd", "Skewness", "Kurtosis",
      "2.5% quantile", "97.5% quantile"};
  if (index == 0) return {"Transitions", "Number"};
  if (index == 1) return {"Transitions", "Channels"};
  if (index == 2) return {"Transitions", "Absorbing states"};
  if (index < 10) return {"Program ratio", kStatNames[index - 3]};
  return {"Session duration", kStatNames[index - 10]};
}

}  // namespace

std::string loadings_to_csv(const EfaModel& model, double blank_threshold) {
  std::string out = "data_source,feature";
  for (int f = 1; f <= model.n_factors; ++f) out += ",factor_" + std::to_string(f);
  out += '\n';
  for (Eigen::Index j = 0; j < model.loadings.rows(); ++j) {
    const auto label = feature_label(static_cast<int>(j));
    out += label.source;
    out += ',';
    out += label.feature;
    for (Eigen::Index f = 0; f < model.loadings.cols(); ++f) {
      out += ',';
      const double v = model.loadings(j, f);
      if (std::abs(v) >= blank_threshold) out += csv::format_double(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

}  // namespace

std::string efa_model_to_json(const EfaModel& model) {
  nlohmann::json j;
  j["n_factors"] = model.n_factors;
  j["rotation"] = model.rotation;
  j["explained_variance_fraction"] = model.explained_variance_fraction;
  j["heywood"] = model.heywood;
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["loadings"] = matrix_to_json(model.loadings);
  j["score_coef"] = matrix_to_json(model.score_coef);
  j["uniquenesses"] = std::vector<double>(
      model.uniquenesses.data(), model.uniquenesses.data() + model.uniquenesses.size());
  j["scaling_mean"] = std::vector<double>(model.scaling.mean.data(),
                                          model.scaling.mean.data() +
                                              model.scaling.mean.size());
  j["scaling_sd"] = std::vector<double>(
      model.scaling.sd.data(), model.scaling.sd.data() + model.scaling.sd.size());
  j["constant_cols"] = model.scaling.constant_cols;
  return j.dump(2);
}

EfaModel efa_model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EfaModel m;
  m.n_factors = j.at("n_factors").get<int>();
  m.rotation = j.at("rotation").get<std::string>();
  m.explained_variance_fraction = j.at("explained_variance_fraction").get<double>();
  m.heywood = j.at("heywood").get<bool>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  m.loadings = matrix_from_json(j.at("loadings"));
  m.score_coef = matrix_from_json(j.at("score_coef"));
  const auto uniq = j.at("uniquenesses").get<std::vector<double>>();
  m.uniquenesses = Eigen::Map<const Eigen::VectorXd>(uniq.data(),
                                                     static_cast<Eigen::Index>(uniq.size()));
  const auto mean = j.at("scaling_mean").get<std::vector<double>>();
  const auto sd = j.at("scaling_sd").get<std::vector<double>>();
  m.scaling.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                     static_cast<Eigen::Index>(mean.size()));
  m.scaling.sd = Eigen::Map<const Eigen::VectorXd>(sd.data(),
                                                   static_cast<Eigen::Index>(sd.size()));
  m.scaling.constant_cols = j.at("constant_cols").get<std::vector<bool>>();
  return m;
}

}  // namespace tvprof
