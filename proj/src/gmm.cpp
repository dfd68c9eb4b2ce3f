#include "tvprof/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tvprof/rng.hpp"

namespace tvprof {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

const char* kStructureNames[kNumStructures] = {
    "EII", "VII", "EEI", "VEI", "EVI", "VVI", "EEE",
    "EVE", "VEE", "VVE", "EEV", "VEV", "EVV", "VVV"};

}  // namespace

const char* structure_name(CovStructure s) {
  return kStructureNames[static_cast<int>(s)];
}

std::optional<CovStructure> parse_structure(std::string_view name) {
  for (int i = 0; i < kNumStructures; ++i)
    if (name == kStructureNames[i]) return static_cast<CovStructure>(i);
  return std::nullopt;
}

int cov_param_count(CovStructure s, int G, int d) {
  const int shape = d - 1;               // det-1 diagonal
  const int orient = d * (d - 1) / 2;    // orthogonal matrix
  switch (s) {
    case CovStructure::EII: return 1;
    case CovStructure::VII: return G;
    case CovStructure::EEI: return d;
    case CovStructure::VEI: return G + shape;
    case CovStructure::EVI: return 1 + G * shape;
    case CovStructure::VVI: return G * d;
    case CovStructure::EEE: return d * (d + 1) / 2;
    case CovStructure::EVE: return 1 + G * shape + orient;
    case CovStructure::VEE: return G + shape + orient;
    case CovStructure::VVE: return G + G * shape + orient;
    case CovStructure::EEV: return 1 + shape + G * orient;
    case CovStructure::VEV: return G + shape + G * orient;
    case CovStructure::EVV: return 1 + G * shape + G * orient;
    case CovStructure::VVV: return G * d * (d + 1) / 2;
  }
  return 0;
}

int mixture_param_count(CovStructure s, int G, int d) {
  return G * d + (G - 1) + cov_param_count(s, G, d);
}

double bic_value(double loglik, int n_params, int n) {
  return 2.0 * loglik - static_cast<double>(n_params) * std::log(static_cast<double>(n));
}

namespace {

// n x G matrix of log(pi_k) + log phi(x_i; mu_k, Sigma_k)
Eigen::MatrixXd weighted_log_densities(const Eigen::MatrixXd& x,
                                       const MixtureParams& params) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const int G = static_cast<int>(params.weights.size());
  Eigen::MatrixXd logp(n, G);
  for (int k = 0; k < G; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(params.covs[static_cast<std::size_t>(k)]);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("estep: covariance not positive definite");
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) logdet += 2.0 * std::log(l(j, j));

    Eigen::MatrixXd y = (x.rowwise() - params.means.row(k)).transpose();
    llt.matrixL().solveInPlace(y);
    const Eigen::VectorXd q = y.colwise().squaredNorm();
    logp.col(k) = (-0.5 * (static_cast<double>(d) * kLog2Pi + logdet) +
                   std::log(params.weights(k))) -
                  0.5 * q.array();
  }
  return logp;
}

}  // namespace

EStepResult estep(const Eigen::MatrixXd& x, const MixtureParams& params) {
  Eigen::MatrixXd logp = weighted_log_densities(x, params);
  EStepResult out;
  out.resp.resize(logp.rows(), logp.cols());
  out.loglik = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    const double sum = (logp.row(i).array() - m).exp().sum();
    const double lse = m + std::log(sum);
    out.resp.row(i) = (logp.row(i).array() - lse).exp();
    out.loglik += lse;
  }
  return out;
}

double mixture_loglik(const Eigen::MatrixXd& x, const MixtureParams& params) {
  Eigen::MatrixXd logp = weighted_log_densities(x, params);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    ll += m + std::log((logp.row(i).array() - m).exp().sum());
  }
  return ll;
}

namespace {

double detpow(const Eigen::VectorXd& v) {
  return std::exp(v.array().log().mean());
}

Eigen::VectorXd clamp_floor(const Eigen::VectorXd& v, double f, bool& clamped) {
  if ((v.array() < f).any()) clamped = true;
  return v.cwiseMax(f);
}

struct Scatter {
  std::vector<Eigen::MatrixXd> w;  // per-component weighted scatter
  Eigen::VectorXd nk;
  double n = 0.0;
  int G = 0;
  Eigen::Index d = 0;
};

// Objective minimized over covariance parameters for fixed responsibilities:
// sum_k [ tr(W_k Sigma_k^-1) + n_k logdet Sigma_k ].
double scatter_objective(const Scatter& sc, const std::vector<Eigen::MatrixXd>& covs) {
  double f = 0.0;
  for (int k = 0; k < sc.G; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(covs[static_cast<std::size_t>(k)]);
    double logdet = 0.0;
    for (Eigen::Index j = 0; j < sc.d; ++j)
      logdet += 2.0 * std::log(llt.matrixLLT()(j, j));
    f += llt.solve(sc.w[static_cast<std::size_t>(k)]).trace() + sc.nk(k) * logdet;
  }
  return f;
}

// One majorization step for the shared-orientation criterion
// f(D) = sum_k tr(D^T S_k D B_k), B_k diagonal nonnegative. Returns an
// orthogonal D no worse than d0 (Browne & McNicholas 2014 style update,
// with the Frobenius norm as the spectral bound).
Eigen::MatrixXd orientation_mm_step(const std::vector<Eigen::MatrixXd>& s,
                                    const std::vector<Eigen::VectorXd>& b,
                                    const Eigen::MatrixXd& d0) {
  const Eigen::Index d = d0.rows();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double bound = s[k].norm();
    f.noalias() += 2.0 * ((s[k] - bound * Eigen::MatrixXd::Identity(d, d)) * d0 *
                          b[k].asDiagonal());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return -(svd.matrixU() * svd.matrixV().transpose());
}

void set_min_eig(MstepResult& r, double candidate) {
  r.min_cov_eig = std::min(r.min_cov_eig, candidate);
}

// Alternation over common det-1 shape a and per-component volumes lam_k,
// given per-component variance spectra v_k (already on per-observation
// scale). Shared by VEI (axis-aligned spectra) and VEV (eigen spectra).
void volume_shape_alternation(const std::vector<Eigen::VectorXd>& v,
                              const Eigen::VectorXd& nk, int max_iter, double tol,
                              Eigen::VectorXd& a, Eigen::VectorXd& lam) {
  const int G = static_cast<int>(v.size());
  const Eigen::Index d = v[0].size();
  const double dd = static_cast<double>(d);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    for (int k = 0; k < G; ++k)
      lam(k) = (v[static_cast<std::size_t>(k)].array() / a.array()).sum() / dd;
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < G; ++k)
      raw += nk(k) * v[static_cast<std::size_t>(k)] / lam(k);
    a = raw / detpow(raw);

    double obj = 0.0;
    for (int k = 0; k < G; ++k)
      obj += nk(k) * ((v[static_cast<std::size_t>(k)].array() / (lam(k) * a.array())).sum() +
                      dd * std::log(lam(k)));
    if (std::abs(prev - obj) < tol * (1.0 + std::abs(obj))) break;
    prev = obj;
  }
}

}  // namespace

MstepResult mstep(const Eigen::MatrixXd& x, const Eigen::MatrixXd& resp,
                  const MstepOptions& opts, const MstepResult* warm) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const int G = static_cast<int>(resp.cols());
  const double f = opts.eig_floor;

  Scatter sc;
  sc.G = G;
  sc.d = d;
  sc.n = static_cast<double>(n);
  sc.nk = resp.colwise().sum();

  MstepResult out;
  out.min_cov_eig = std::numeric_limits<double>::infinity();
  out.params.weights = sc.nk / sc.n;
  out.params.means.resize(G, d);
  sc.w.resize(static_cast<std::size_t>(G));
  for (int k = 0; k < G; ++k) {
    out.params.means.row(k) = (resp.col(k).transpose() * x) / sc.nk(k);
    Eigen::MatrixXd centered = x.rowwise() - out.params.means.row(k);
    sc.w[static_cast<std::size_t>(k)] =
        centered.transpose() * resp.col(k).asDiagonal() * centered;
  }

  auto& covs = out.params.covs;
  covs.assign(static_cast<std::size_t>(G), Eigen::MatrixXd());

  const auto identity = Eigen::MatrixXd::Identity(d, d);
  const auto pooled = [&] {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
    for (const auto& wk : sc.w) w += wk;
    return w;
  };

  // per-component spectra on per-observation scale, from the axes (diag)
  // or from eigendecompositions; clamped at the floor
  const auto diag_spectra = [&] {
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(G));
    for (int k = 0; k < G; ++k)
      v[static_cast<std::size_t>(k)] =
          clamp_floor(sc.w[static_cast<std::size_t>(k)].diagonal() / sc.nk(k), f,
                      out.clamped);
    return v;
  };

  switch (opts.structure) {
    case CovStructure::EII: {
      double lam = pooled().trace() / (sc.n * static_cast<double>(d));
      if (lam < f) {
        lam = f;
        out.clamped = true;
      }
      for (auto& c : covs) c = lam * identity;
      set_min_eig(out, lam);
      break;
    }
    case CovStructure::VII: {
      for (int k = 0; k < G; ++k) {
        double lam = sc.w[static_cast<std::size_t>(k)].trace() /
                     (sc.nk(k) * static_cast<double>(d));
        if (lam < f) {
          lam = f;
          out.clamped = true;
        }
        covs[static_cast<std::size_t>(k)] = lam * identity;
        set_min_eig(out, lam);
      }
      break;
    }
    case CovStructure::EEI: {
      const Eigen::VectorXd v = clamp_floor(pooled().diagonal() / sc.n, f, out.clamped);
      for (auto& c : covs) c = v.asDiagonal();
      set_min_eig(out, v.minCoeff());
      break;
    }
    case CovStructure::VEI: {
      const auto v = diag_spectra();
      Eigen::VectorXd a;
      if (warm && warm->shared_diag.size() == d) {
        a = warm->shared_diag;
      } else {
        Eigen::VectorXd raw = clamp_floor(pooled().diagonal() / sc.n, f, out.clamped);
        a = raw / detpow(raw);
      }
      Eigen::VectorXd lam(G);
      volume_shape_alternation(v, sc.nk, opts.inner_max_iter, opts.inner_tol, a, lam);
      for (int k = 0; k < G; ++k) {
        covs[static_cast<std::size_t>(k)] = (lam(k) * a).asDiagonal();
        set_min_eig(out, lam(k) * a.minCoeff());
      }
      out.shared_diag = a;
      break;
    }
    case CovStructure::EVI: {
      const auto v = diag_spectra();
      double lam = 0.0;
      std::vector<double> dp(static_cast<std::size_t>(G));
      for (int k = 0; k < G; ++k) {
        dp[static_cast<std::size_t>(k)] = detpow(v[static_cast<std::size_t>(k)]);
        lam += sc.nk(k) * dp[static_cast<std::size_t>(k)] / sc.n;
      }
      for (int k = 0; k < G; ++k) {
        const Eigen::VectorXd ak =
            v[static_cast<std::size_t>(k)] / dp[static_cast<std::size_t>(k)];
        covs[static_cast<std::size_t>(k)] = (lam * ak).asDiagonal();
        set_min_eig(out, lam * ak.minCoeff());
      }
      break;
    }
    case CovStructure::VVI: {
      const auto v = diag_spectra();
      for (int k = 0; k < G; ++k) {
        covs[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k)].asDiagonal();
        set_min_eig(out, v[static_cast<std::size_t>(k)].minCoeff());
      }
      break;
    }
    case CovStructure::EEE: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pooled() / sc.n);
      const Eigen::VectorXd ev = clamp_floor(es.eigenvalues(), f, out.clamped);
      const Eigen::MatrixXd sigma =
          es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      for (auto& c : covs) c = sigma;
      set_min_eig(out, ev.minCoeff());
      break;
    }
    case CovStructure::VVV: {
      for (int k = 0; k < G; ++k) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            sc.w[static_cast<std::size_t>(k)] / sc.nk(k));
        const Eigen::VectorXd ev = clamp_floor(es.eigenvalues(), f, out.clamped);
        covs[static_cast<std::size_t>(k)] =
            es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        set_min_eig(out, ev.minCoeff());
      }
      break;
    }
    case CovStructure::EEV:
    case CovStructure::VEV:
    case CovStructure::EVV: {
      // per-component eigendecompositions supply the orientations
      std::vector<Eigen::MatrixXd> rot(static_cast<std::size_t>(G));
      std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(G));
      for (int k = 0; k < G; ++k) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            sc.w[static_cast<std::size_t>(k)] / sc.nk(k));
        rot[static_cast<std::size_t>(k)] = es.eigenvectors();
        v[static_cast<std::size_t>(k)] = clamp_floor(es.eigenvalues(), f, out.clamped);
      }
      if (opts.structure == CovStructure::EEV) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(d);
        for (int k = 0; k < G; ++k) t += sc.nk(k) * v[static_cast<std::size_t>(k)];
        t /= sc.n;  // eigenvalue order is ascending for every component
        const Eigen::VectorXd a = t / detpow(t);
        const double lam = detpow(t);
        for (int k = 0; k < G; ++k) {
          covs[static_cast<std::size_t>(k)] = rot[static_cast<std::size_t>(k)] *
                                              (lam * a).asDiagonal() *
                                              rot[static_cast<std::size_t>(k)].transpose();
        }
        set_min_eig(out, t.minCoeff());
      } else if (opts.structure == CovStructure::VEV) {
        Eigen::VectorXd a;
        if (warm && warm->shared_diag.size() == d) {
          a = warm->shared_diag;
        } else {
          Eigen::VectorXd raw = Eigen::VectorXd::Zero(d);
          for (int k = 0; k < G; ++k) raw += sc.nk(k) * v[static_cast<std::size_t>(k)];
          a = raw / detpow(raw);
        }
        Eigen::VectorXd lam(G);
        volume_shape_alternation(v, sc.nk, opts.inner_max_iter, opts.inner_tol, a, lam);
        for (int k = 0; k < G; ++k) {
          covs[static_cast<std::size_t>(k)] = rot[static_cast<std::size_t>(k)] *
                                              (lam(k) * a).asDiagonal() *
                                              rot[static_cast<std::size_t>(k)].transpose();
          set_min_eig(out, lam(k) * a.minCoeff());
        }
        out.shared_diag = a;
      } else {  // EVV
        double lam = 0.0;
        std::vector<double> dp(static_cast<std::size_t>(G));
        for (int k = 0; k < G; ++k) {
          dp[static_cast<std::size_t>(k)] = detpow(v[static_cast<std::size_t>(k)]);
          lam += sc.nk(k) * dp[static_cast<std::size_t>(k)] / sc.n;
        }
        for (int k = 0; k < G; ++k) {
          const Eigen::VectorXd ak =
              v[static_cast<std::size_t>(k)] / dp[static_cast<std::size_t>(k)];
          covs[static_cast<std::size_t>(k)] = rot[static_cast<std::size_t>(k)] *
                                              (lam * ak).asDiagonal() *
                                              rot[static_cast<std::size_t>(k)].transpose();
          set_min_eig(out, lam * ak.minCoeff());
        }
      }
      break;
    }
    case CovStructure::VEE: {
      // common det-1 composite C with per-component volumes
      Eigen::MatrixXd c;
      if (warm && warm->shared_full.rows() == d) {
        c = warm->shared_full;
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pooled() / sc.n);
        const Eigen::VectorXd ev = clamp_floor(es.eigenvalues(), f, out.clamped);
        c = es.eigenvectors() * (ev / detpow(ev)).asDiagonal() *
            es.eigenvectors().transpose();
      }
      Eigen::VectorXd lam = Eigen::VectorXd::Ones(G);
      double prev = std::numeric_limits<double>::infinity();
      double min_ceig = 1.0;
      for (int it = 0; it < opts.inner_max_iter; ++it) {
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        for (int k = 0; k < G; ++k)
          lam(k) = llt.solve(sc.w[static_cast<std::size_t>(k)]).trace() /
                   (sc.nk(k) * static_cast<double>(d));
        lam = clamp_floor(lam, f, out.clamped);
        Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(d, d);
        for (int k = 0; k < G; ++k) raw += sc.w[static_cast<std::size_t>(k)] / lam(k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raw);
        const Eigen::VectorXd ev = clamp_floor(es.eigenvalues(), f, out.clamped);
        const Eigen::VectorXd shape = ev / detpow(ev);
        c = es.eigenvectors() * shape.asDiagonal() * es.eigenvectors().transpose();
        min_ceig = shape.minCoeff();

        double obj = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt2(c);
        for (int k = 0; k < G; ++k)
          obj += llt2.solve(sc.w[static_cast<std::size_t>(k)]).trace() / lam(k) +
                 sc.nk(k) * static_cast<double>(d) * std::log(lam(k));
        if (std::abs(prev - obj) < opts.inner_tol * (1.0 + std::abs(obj))) break;
        prev = obj;
      }
      for (int k = 0; k < G; ++k) {
        covs[static_cast<std::size_t>(k)] = lam(k) * c;
        set_min_eig(out, lam(k) * min_ceig);
      }
      out.shared_full = c;
      break;
    }
    case CovStructure::EVE:
    case CovStructure::VVE: {
      // shared orientation via majorization, shapes (and volumes) per
      // component from the rotated diagonals
      const bool common_volume = opts.structure == CovStructure::EVE;
      Eigen::MatrixXd rot;
      if (warm && warm->shared_full.rows() == d) {
        rot = warm->shared_full;
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pooled());
        rot = es.eigenvectors();
      }
      std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(G),
                                     Eigen::VectorXd::Ones(d));
      std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(G));
      Eigen::VectorXd lam = Eigen::VectorXd::Ones(G);
      double lam_common = 1.0;
      double prev = std::numeric_limits<double>::infinity();
      for (int it = 0; it < opts.inner_max_iter; ++it) {
        // shapes/volumes given the orientation (exact conditional minimum)
        lam_common = 0.0;
        for (int k = 0; k < G; ++k) {
          const Eigen::VectorXd w_diag =
              (rot.transpose() * sc.w[static_cast<std::size_t>(k)] * rot).diagonal();
          const Eigen::VectorXd vk = clamp_floor(w_diag / sc.nk(k), f, out.clamped);
          const double dp = detpow(vk);
          v[static_cast<std::size_t>(k)] = vk;
          a[static_cast<std::size_t>(k)] = vk / dp;
          lam(k) = dp;
          lam_common += sc.nk(k) * dp / sc.n;
        }

        // tr(W_k Sigma_k^-1) + n_k logdet Sigma_k under the current pieces;
        // both alternation steps decrease it, so it is safe to monitor
        double obj = 0.0;
        for (int k = 0; k < G; ++k) {
          const double vol = common_volume ? lam_common : lam(k);
          obj += sc.nk(k) *
                 ((v[static_cast<std::size_t>(k)].array() /
                   (vol * a[static_cast<std::size_t>(k)].array()))
                      .sum() +
                  static_cast<double>(d) * std::log(vol));
        }
        if (std::abs(prev - obj) < opts.inner_tol * (1.0 + std::abs(obj))) break;
        prev = obj;

        // orientation given the shapes: one MM descent step
        std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(G));
        for (int k = 0; k < G; ++k) {
          b[static_cast<std::size_t>(k)] =
              a[static_cast<std::size_t>(k)].cwiseInverse();
          if (!common_volume) b[static_cast<std::size_t>(k)] /= lam(k);
        }
        rot = orientation_mm_step(sc.w, b, rot);
      }
      // recompute shapes once more for the final orientation
      for (int k = 0; k < G; ++k) {
        const Eigen::VectorXd w_diag =
            (rot.transpose() * sc.w[static_cast<std::size_t>(k)] * rot).diagonal();
        const Eigen::VectorXd vk = clamp_floor(w_diag / sc.nk(k), f, out.clamped);
        const double dp = detpow(vk);
        a[static_cast<std::size_t>(k)] = vk / dp;
        lam(k) = dp;
      }
      if (common_volume) {
        lam_common = 0.0;
        for (int k = 0; k < G; ++k) lam_common += sc.nk(k) * lam(k) / sc.n;
      }
      for (int k = 0; k < G; ++k) {
        const double vol = common_volume ? lam_common : lam(k);
        const Eigen::VectorXd spec = vol * a[static_cast<std::size_t>(k)];
        covs[static_cast<std::size_t>(k)] =
            rot * spec.asDiagonal() * rot.transpose();
        set_min_eig(out, spec.minCoeff());
      }
      out.shared_full = rot;
      break;
    }
  }
  return out;
}

std::vector<int> kmeanspp_assign(const Eigen::MatrixXd& x, int G,
                                 std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  RngStream rng(seed);
  std::vector<Eigen::Index> centers;
  centers.reserve(static_cast<std::size_t>(G));
  centers.push_back(std::min<Eigen::Index>(
      n - 1, static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n))));

  Eigen::VectorXd d2 =
      (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < G) {
    Eigen::Index next;
    if (d2.sum() <= 0.0) {
      next = std::min<Eigen::Index>(
          n - 1, static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)));
    } else {
      next = static_cast<Eigen::Index>(
          rng.categorical(std::span<const double>(d2.data(), static_cast<std::size_t>(n))));
    }
    centers.push_back(next);
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int k = 0; k < G; ++k) {
      const double dist = (x.row(i) - x.row(centers[static_cast<std::size_t>(k)]))
                              .squaredNorm();
      if (dist < best) {
        best = dist;
        arg = k;
      }
    }
    assign[static_cast<std::size_t>(i)] = arg;
  }
  return assign;
}

MixtureFit em_fit(const Eigen::MatrixXd& x, int G, CovStructure structure,
                  const EmConfig& config, std::uint64_t seed) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (!x.allFinite()) throw std::invalid_argument("em_fit: non-finite input");
  if (G < 1) throw std::invalid_argument("em_fit: G must be >= 1");
  if (n < G) throw std::invalid_argument("em_fit: n < G");

  // regularization scale: mean total variance of the data
  double scale = 0.0;
  {
    const Eigen::RowVectorXd mu = x.colwise().mean();
    scale = (x.rowwise() - mu).squaredNorm() /
            (static_cast<double>(std::max<Eigen::Index>(n - 1, 1)) *
             static_cast<double>(d));
  }
  if (!(scale > 0.0)) scale = 1.0;
  const double floor = 1e-8 * scale;

  MstepOptions mopts;
  mopts.structure = structure;
  mopts.eig_floor = floor;
  mopts.inner_max_iter = config.inner_max_iter;
  mopts.inner_tol = config.inner_tol;

  MixtureFit best;
  best.structure = structure;
  best.G = G;
  best.seed = seed;
  best.n_params = mixture_param_count(structure, G, static_cast<int>(d));
  best.failed = true;
  best.fail_reason = "no successful restart";

  for (int r = 0; r < config.restarts; ++r) {
    const std::uint64_t rseed = mix64(seed, 1000 + static_cast<std::uint64_t>(r));
    const auto assign = kmeanspp_assign(x, G, rseed);
    Eigen::MatrixXd resp(n, G);
    if (G == 1) {
      resp.setOnes();
    } else {
      resp.setConstant((1.0 - config.smoothing) / static_cast<double>(G - 1));
      for (Eigen::Index i = 0; i < n; ++i)
        resp(i, assign[static_cast<std::size_t>(i)]) = config.smoothing;
    }

    MixtureFit fit;
    fit.structure = structure;
    fit.G = G;
    fit.seed = seed;
    fit.n_params = best.n_params;

    MstepResult ms = mstep(x, resp, mopts);
    fit.regularized = ms.clamped;
    bool last_clamped = ms.clamped;
    double min_eig = ms.min_cov_eig;

    double prev_ll = -std::numeric_limits<double>::infinity();
    EStepResult es;
    bool aborted = false;
    for (int it = 0; it < config.max_iter; ++it) {
      es = estep(x, ms.params);
      fit.loglik_trace.push_back(es.loglik);
      fit.iterations = it + 1;
      if (!std::isfinite(es.loglik)) {
        fit.failed = true;
        fit.fail_reason = "non-finite log-likelihood";
        aborted = true;
        break;
      }
      if (it > 0 &&
          std::abs(es.loglik - prev_ll) < config.tol * (1.0 + std::abs(es.loglik))) {
        fit.converged = true;
        break;
      }
      prev_ll = es.loglik;

      const Eigen::VectorXd mass = es.resp.colwise().sum();
      if (mass.minCoeff() < config.mass_floor) {
        fit.failed = true;
        fit.fail_reason = "component responsibility mass collapsed";
        aborted = true;
        break;
      }
      ms = mstep(x, es.resp, mopts, &ms);
      fit.regularized |= ms.clamped;
      last_clamped = ms.clamped;
      min_eig = ms.min_cov_eig;
    }

    if (!aborted) {
      fit.params = ms.params;
      fit.responsibilities = es.resp;
      fit.loglik = es.loglik;
      if (last_clamped || min_eig <= 10.0 * floor) {
        fit.failed = true;
        fit.fail_reason = "degenerate covariance at regularization floor";
      } else if (es.resp.colwise().sum().minCoeff() < config.mass_floor) {
        fit.failed = true;
        fit.fail_reason = "component responsibility mass collapsed";
      } else {
        fit.failed = false;
        fit.bic = bic_value(fit.loglik, fit.n_params, static_cast<int>(n));
      }
    }

    if (!fit.failed) {
      if (best.failed || fit.loglik > best.loglik) best = std::move(fit);
    } else if (best.failed && best.fail_reason == "no successful restart") {
      best = std::move(fit);  // first failure becomes the report
    }
  }
  return best;
}

std::string fit_summary_json(const MixtureFit& fit) {
  nlohmann::json j;
  j["structure"] = structure_name(fit.structure);
  j["G"] = fit.G;
  j["loglik"] = fit.loglik;
  j["n_params"] = fit.n_params;
  j["bic"] = fit.bic;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["failed"] = fit.failed;
  if (fit.failed) j["fail_reason"] = fit.fail_reason;
  j["regularized"] = fit.regularized;
  j["seed"] = fit.seed;
  return j.dump();
}

}  // namespace tvprof
