#pragma once
// Weighted scores estimating equations
//
//   g1*(beta) = sum_i X_i' W_i^{-1} s_i(beta) = 0,   W_i^{-1} = Delta_i Omega_i^{-1},
//
// where Omega_i is the covariance of the univariate scores under the fitted
// discretized normal working model, and the robust covariance
//
//   V1* = H^{-1} M H^{-T},  H = sum_i X_i' W_i^{-1} Delta_i X_i,
//                           M = sum_i X_i' W_i^{-1} s_i s_i' W_i^{-T} X_i.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wscl/cl1.hpp"
#include "wscl/correlation.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/options.hpp"
#include "wscl/outcome_tables.hpp"
#include "wscl/parallel.hpp"

namespace wscl {

/// Cov(s_j, s_k) = sum_{y_j, y_k} s_j s_k f2 under the working model (scores have mean 0).
inline double score_cov_pair(const MarginTable& tj, const MarginTable& tk, double rho) {
  if (rho == 0.0) return 0.0;
  double acc = 0.0;
  for (int a = 0; a < tj.size(); ++a) {
    for (int b = 0; b < tk.size(); ++b) {
      const double f2 = bvn_rectangle(tj.cut[a].lower, tj.cut[a].upper, tk.cut[b].lower, tk.cut[b].upper, rho);
      acc += tj.s1[a] * tk.s1[b] * f2;
    }
  }
  return acc;
}

inline double score_cov_pair(MarginFamily family, double nu_j, double nu_k, double rho,
                             double poisson_tail = kDefaultPoissonTail) {
  if (!(std::fabs(rho) < 1.0)) throw ConfigError("score_cov_pair needs |rho| < 1");
  return score_cov_pair(margin_table(family, nu_j, poisson_tail), margin_table(family, nu_k, poisson_tail), rho);
}

struct WorkingWeights {
  Eigen::VectorXd delta;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd winv;  // Delta Omega^{-1}
  bool jittered = false;
};

inline WorkingWeights cluster_weights(MarginFamily family, const Eigen::VectorXd& nu, const std::vector<int>& occasions,
                                      const CorrelationModel& corr, double poisson_tail, const std::string& id = {}) {
  const auto d = nu.size();
  WorkingWeights w;
  w.delta.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) w.delta[j] = fisher_weight(family, nu[j]);
  w.omega = w.delta.asDiagonal();
  if (d == 1 || corr.structure() == Structure::Independence) {
    w.winv = Eigen::MatrixXd::Identity(d, d);
    return w;
  }
  std::vector<MarginTable> tables;
  tables.reserve(d);
  for (Eigen::Index j = 0; j < d; ++j) tables.push_back(margin_table(family, nu[j], poisson_tail));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = j + 1; k < d; ++k) {
      const double rho = corr.pair_correlation(occasions[j], occasions[k]);
      w.omega(j, k) = w.omega(k, j) = score_cov_pair(tables[j], tables[k], rho);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(w.omega);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * w.omega.trace() / static_cast<double>(d);
    llt.compute(w.omega + jitter * Eigen::MatrixXd::Identity(d, d));
    w.jittered = true;
    if (llt.info() != Eigen::Success) {
      throw NumericalError("working score covariance is singular for cluster '" + id + "'");
    }
  }
  // W^{-1} = Delta Omega^{-1} = (Omega^{-1} Delta)'.
  w.winv = llt.solve(Eigen::MatrixXd(w.delta.asDiagonal())).transpose();
  return w;
}

inline std::vector<WorkingWeights> build_weights(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                                 const CorrelationModel& corr, const EstimationOptions& opts = {}) {
  return parallel_map<WorkingWeights>(
      data.n(),
      [&](int i) {
        const auto& c = data.clusters[i];
        return cluster_weights(data.family, c.X * beta, c.occasions, corr, opts.poisson_tail, c.id);
      },
      opts.workers);
}

inline Eigen::VectorXd cluster_scores(MarginFamily family, const Cluster& c, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd nu = c.X * beta;
  Eigen::VectorXd s(c.size());
  for (int j = 0; j < c.size(); ++j) s[j] = score(family, {nu[j], c.y[j]});
  return s;
}

inline Eigen::VectorXd weighted_score(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                      const std::vector<WorkingWeights>& weights) {
  std::vector<Eigen::VectorXd> parts(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    parts[i] = c.X.transpose() * (weights[i].winv * cluster_scores(data.family, c, beta));
  }
  return tree_sum<Eigen::VectorXd>(parts, Eigen::VectorXd::Zero(data.p()));
}

/// H = sum_i X_i' W_i^{-1} Delta_i X_i.
inline Eigen::MatrixXd weighted_sensitivity(const LongitudinalDataset& data, const std::vector<WorkingWeights>& weights) {
  std::vector<Eigen::MatrixXd> parts(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    parts[i] = c.X.transpose() * weights[i].winv * weights[i].delta.asDiagonal() * c.X;
  }
  return tree_sum<Eigen::MatrixXd>(parts, Eigen::MatrixXd::Zero(data.p(), data.p()));
}

/// M = sum_i X_i' W_i^{-1} s_i s_i' W_i^{-T} X_i with the empirical score outer products.
inline Eigen::MatrixXd weighted_variability(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                            const std::vector<WorkingWeights>& weights) {
  std::vector<Eigen::MatrixXd> parts(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    const Eigen::VectorXd u = c.X.transpose() * (weights[i].winv * cluster_scores(data.family, c, beta));
    parts[i] = u * u.transpose();
  }
  return tree_sum<Eigen::MatrixXd>(parts, Eigen::MatrixXd::Zero(data.p(), data.p()));
}

struct WeightedScoresFit {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd V1star;
  Eigen::VectorXd se;
  int iterations = 0;
  bool converged = false;
  double score_norm = 0.0;  // max |g1*| / #observations
  bool jittered = false;
};

/// Sandwich covariance at beta with the given weights; symmetrized.
inline Eigen::MatrixXd sandwich_covariance(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                           const std::vector<WorkingWeights>& weights) {
  const Eigen::MatrixXd h = weighted_sensitivity(data, weights);
  const Eigen::MatrixXd m = weighted_variability(data, beta, weights);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
  if (!lu.isInvertible()) throw NumericalError("weighted-scores sensitivity matrix is singular");
  const Eigen::MatrixXd hinv_m = lu.solve(m);
  const Eigen::MatrixXd v = lu.solve(hinv_m.transpose());  // H^{-1} (H^{-1} M)' = H^{-1} M H^{-T}
  return 0.5 * (v + v.transpose());
}

inline WeightedScoresFit solve_weighted_scores(const LongitudinalDataset& data, const Cl1Fit& cl1,
                                               const EstimationOptions& opts = {}) {
  if (!cl1.stage1_converged || !cl1.stage2_converged) throw ConfigError("weighted scores need a converged CL1 fit");
  const double nobs = std::max(1, data.total_observations());
  WeightedScoresFit fit;
  Eigen::VectorXd beta = cl1.beta;
  std::vector<WorkingWeights> weights = build_weights(data, beta, cl1.corr, opts);
  Eigen::VectorXd g = weighted_score(data, beta, weights);
  auto norm_of = [&](const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff() / nobs; };
  double gnorm = norm_of(g);

  int it = 0;
  for (; it < opts.ws_max_iter; ++it) {
    if (gnorm <= opts.ws_tol) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd h = weighted_sensitivity(data, weights);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
    if (!lu.isInvertible()) throw NumericalError("weighted-scores sensitivity matrix is singular", {beta.data(), beta.data() + beta.size()});
    const Eigen::VectorXd step = lu.solve(g);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      auto cand_weights = opts.refresh_weights ? build_weights(data, cand, cl1.corr, opts) : weights;
      const Eigen::VectorXd g_cand = weighted_score(data, cand, cand_weights);
      const double n_cand = norm_of(g_cand);
      if (std::isfinite(n_cand) && n_cand < gnorm) {
        beta = cand;
        weights = std::move(cand_weights);
        g = g_cand;
        gnorm = n_cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Rounding floor reached near the root.
      if (gnorm <= opts.ws_tol * 1e3) fit.converged = true;
      break;
    }
  }
  fit.iterations = it;
  fit.score_norm = gnorm;
  if (!fit.converged && gnorm <= opts.ws_tol) fit.converged = true;
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "weighted scores equations did not converge after " << it << " iterations (scaled score " << gnorm << ")";
    throw NumericalError(msg.str(), {beta.data(), beta.data() + beta.size()});
  }
  fit.beta_hat = beta;
  for (const auto& w : weights) fit.jittered = fit.jittered || w.jittered;
  // The covariance always uses W evaluated at beta-hat.
  if (!opts.refresh_weights) weights = build_weights(data, beta, cl1.corr, opts);
  fit.V1star = sandwich_covariance(data, beta, weights);
  fit.se = fit.V1star.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

}  // namespace wscl
