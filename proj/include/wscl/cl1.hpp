#pragma once
// Two-stage composite likelihood (CL1) estimation.
//
// Stage 1 solves the independent estimating equations g1 = sum_i X_i' s_i(beta)
// by Fisher scoring. Stage 2 holds beta fixed and maximizes the pairwise
// log-likelihood L2 = sum_i sum_{j<k} log f2(y_ij, y_ik) over the structure
// parameters, using a quasi-Newton ascent on rho = tanh(theta).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wscl/correlation.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/glm_margins.hpp"
#include "wscl/mvn_integrals.hpp"
#include "wscl/options.hpp"
#include "wscl/parallel.hpp"

namespace wscl {

/// Latent interval of one observation and dF1/dnu at both ends.
struct MarginCut {
  double lower = -kInf;
  double upper = kInf;
  double dlower = 0.0;
  double dupper = 0.0;
};

inline MarginCut margin_cut(MarginFamily family, int y, double nu) {
  return {cutpoint(family, y - 1, nu), cutpoint(family, y, nu), cdf_dnu(family, y - 1, nu), cdf_dnu(family, y, nu)};
}

/// f2 of one outcome pair and its first derivatives in rho and both linear predictors.
struct PairCell {
  double f2 = 0.0;
  double df_drho = 0.0;
  double df_dnu1 = 0.0;
  double df_dnu2 = 0.0;
};

namespace detail {

// dF(y;nu)/dnu * P(other interval | Z = z). Equals (d f2 / d z)(d z / d nu) with the
// density factors cancelled, which stays finite far in the tails.
inline double cut_term(double dF, double z, double other_lower, double other_upper, double rho) {
  if (dF == 0.0 || std::isinf(z)) return 0.0;
  return dF * bvn_conditional_mass(z, other_lower, other_upper, rho);
}

}  // namespace detail

inline PairCell bivariate_cell(const MarginCut& a, const MarginCut& b, double rho) {
  PairCell c;
  c.f2 = bvn_rectangle(a.lower, a.upper, b.lower, b.upper, rho);
  c.df_drho = bvn_rectangle_drho(a.lower, a.upper, b.lower, b.upper, rho);
  c.df_dnu1 = detail::cut_term(a.dupper, a.upper, b.lower, b.upper, rho) -
              detail::cut_term(a.dlower, a.lower, b.lower, b.upper, rho);
  c.df_dnu2 = detail::cut_term(b.dupper, b.upper, a.lower, a.upper, rho) -
              detail::cut_term(b.dlower, b.lower, a.lower, a.upper, rho);
  return c;
}

inline constexpr double kProbabilityFloor = 1e-300;

// ---------------------------------------------------------------------------
// Stage 1

inline double univariate_loglik(const LongitudinalDataset& data, const Eigen::VectorXd& beta) {
  double total = 0.0;
  for (const auto& c : data.clusters) {
    const Eigen::VectorXd nu = c.X * beta;
    for (int j = 0; j < c.size(); ++j) total += log_pmf(data.family, {nu[j], c.y[j]});
  }
  return total;
}

inline Eigen::VectorXd iee_score(const LongitudinalDataset& data, const Eigen::VectorXd& beta) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(data.p());
  for (const auto& c : data.clusters) {
    const Eigen::VectorXd nu = c.X * beta;
    Eigen::VectorXd s(c.size());
    for (int j = 0; j < c.size(); ++j) s[j] = score(data.family, {nu[j], c.y[j]});
    g.noalias() += c.X.transpose() * s;
  }
  return g;
}

/// sum_i X_i' Delta_i X_i with the Fisher weights of the margin.
inline Eigen::MatrixXd iee_information(const LongitudinalDataset& data, const Eigen::VectorXd& beta) {
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(data.p(), data.p());
  for (const auto& c : data.clusters) {
    const Eigen::VectorXd nu = c.X * beta;
    Eigen::VectorXd w(c.size());
    for (int j = 0; j < c.size(); ++j) w[j] = fisher_weight(data.family, nu[j]);
    info.noalias() += c.X.transpose() * w.asDiagonal() * c.X;
  }
  return info;
}

struct UnivariateFit {
  Eigen::VectorXd beta;
  int iterations = 0;
  double score_norm = 0.0;  // max |g1| / #observations
  bool converged = false;
};

inline void require_full_rank(const LongitudinalDataset& data) {
  const Eigen::MatrixXd x = data.stacked_design();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < data.p()) {
    throw NumericalError("stacked design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " < p = " +
                         std::to_string(data.p()) + ")");
  }
}

inline UnivariateFit fit_univariate_detailed(const LongitudinalDataset& data, Eigen::VectorXd beta,
                                             const EstimationOptions& opts = {}) {
  require_full_rank(data);
  if (beta.size() != data.p()) beta = Eigen::VectorXd::Zero(data.p());
  const double nobs = std::max(1, data.total_observations());
  UnivariateFit fit;
  double loglik = univariate_loglik(data, beta);
  for (int it = 0; it <= opts.stage1_max_iter; ++it) {
    const Eigen::VectorXd g = iee_score(data, beta);
    fit.score_norm = g.cwiseAbs().maxCoeff() / nobs;
    fit.iterations = it;
    if (fit.score_norm <= opts.stage1_tol) {
      // One more scoring step drives the residual to rounding level at no risk.
      const Eigen::VectorXd polish = iee_information(data, beta).ldlt().solve(g);
      const Eigen::VectorXd candidate = beta + polish;
      const Eigen::VectorXd g2 = iee_score(data, candidate);
      if (g2.cwiseAbs().maxCoeff() <= g.cwiseAbs().maxCoeff()) {
        beta = candidate;
        fit.score_norm = g2.cwiseAbs().maxCoeff() / nobs;
      }
      fit.converged = true;
      break;
    }
    if (it == opts.stage1_max_iter) break;
    const Eigen::MatrixXd info = iee_information(data, beta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw NumericalError("Fisher information is singular", {beta.data(), beta.data() + beta.size()});
    const Eigen::VectorXd step = ldlt.solve(g);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const Eigen::VectorXd candidate = beta + t * step;
      const double ll = univariate_loglik(data, candidate);
      if (std::isfinite(ll) && ll >= loglik - 1e-12 * std::fabs(loglik)) {
        beta = candidate;
        loglik = ll;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  fit.beta = beta;
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "independent estimating equations did not converge after " << fit.iterations
        << " iterations (scaled score " << fit.score_norm << ")";
    throw NumericalError(msg.str(), {beta.data(), beta.data() + beta.size()});
  }
  return fit;
}

inline Eigen::VectorXd fit_univariate(const LongitudinalDataset& data, const Eigen::VectorXd& beta0,
                                      const EstimationOptions& opts = {}) {
  return fit_univariate_detailed(data, beta0, opts).beta;
}

// ---------------------------------------------------------------------------
// Stage 2

using ClusterCuts = std::vector<std::vector<MarginCut>>;

inline ClusterCuts prepare_cuts(const LongitudinalDataset& data, const Eigen::VectorXd& beta) {
  ClusterCuts cuts(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    const Eigen::VectorXd nu = c.X * beta;
    cuts[i].resize(c.size());
    for (int j = 0; j < c.size(); ++j) cuts[i][j] = margin_cut(data.family, c.y[j], nu[j]);
  }
  return cuts;
}

namespace detail {

inline double cluster_pair_loglik(const Cluster& c, const std::vector<MarginCut>& cuts, const CorrelationModel& corr) {
  double total = 0.0;
  for (int j = 0; j < c.size(); ++j) {
    for (int k = j + 1; k < c.size(); ++k) {
      const double rho = corr.pair_correlation(c.occasions[j], c.occasions[k]);
      const double f2 = bvn_rectangle(cuts[j].lower, cuts[j].upper, cuts[k].lower, cuts[k].upper, rho);
      total += std::log(std::max(f2, kProbabilityFloor));
    }
  }
  return total;
}

inline Eigen::VectorXd cluster_pair_score(const Cluster& c, const std::vector<MarginCut>& cuts,
                                          const CorrelationModel& corr) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(corr.param_count());
  if (corr.param_count() == 0) return g;
  for (int j = 0; j < c.size(); ++j) {
    for (int k = j + 1; k < c.size(); ++k) {
      const double rho = corr.pair_correlation(c.occasions[j], c.occasions[k]);
      const double f2 = bvn_rectangle(cuts[j].lower, cuts[j].upper, cuts[k].lower, cuts[k].upper, rho);
      const double df = bvn_rectangle_drho(cuts[j].lower, cuts[j].upper, cuts[k].lower, cuts[k].upper, rho);
      const double s = df / std::max(f2, kProbabilityFloor);
      for (const auto& [idx, dr] : corr.pair_gradient(c.occasions[j], c.occasions[k])) g[idx] += s * dr;
    }
  }
  return g;
}

inline double pair_loglik_from_cuts(const LongitudinalDataset& data, const ClusterCuts& cuts,
                                    const CorrelationModel& corr, int workers) {
  auto parts = parallel_map<double>(
      data.n(), [&](int i) { return cluster_pair_loglik(data.clusters[i], cuts[i], corr); }, workers);
  return tree_sum(parts, 0.0);
}

inline Eigen::VectorXd pair_score_from_cuts(const LongitudinalDataset& data, const ClusterCuts& cuts,
                                            const CorrelationModel& corr, int workers) {
  auto parts = parallel_map<Eigen::VectorXd>(
      data.n(), [&](int i) { return cluster_pair_score(data.clusters[i], cuts[i], corr); }, workers);
  return tree_sum<Eigen::VectorXd>(parts, Eigen::VectorXd::Zero(corr.param_count()));
}

}  // namespace detail

/// L2 = sum of log f2 over clusters and observed occasion pairs. Clusters of size 1 add 0.
inline double bivariate_loglik(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                               const CorrelationModel& corr, const EstimationOptions& opts = {}) {
  return detail::pair_loglik_from_cuts(data, prepare_cuts(data, beta), corr, opts.workers);
}

/// Gradient of L2 with respect to the structure parameters.
inline Eigen::VectorXd bivariate_score(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                       const CorrelationModel& corr, const EstimationOptions& opts = {}) {
  return detail::pair_score_from_cuts(data, prepare_cuts(data, beta), corr, opts.workers);
}

struct Cl1Fit {
  Eigen::VectorXd beta;
  CorrelationModel corr;
  double L1 = 0.0;
  double L2 = 0.0;
  int stage1_iterations = 0;
  int stage2_iterations = 0;
  bool stage1_converged = false;
  bool stage2_converged = false;
  bool boundary = false;  // a correlation sits at its clamp or the PD projection is active
  double stage1_score_norm = 0.0;
  double stage2_gradient_norm = 0.0;
  std::vector<double> stage2_trace;  // L2 after each accepted step, starting at the initial point
};

namespace detail {

struct Stage2Problem {
  Structure structure;
  int d_max;
  int q;
  std::vector<double> theta_lo;
  std::vector<double> theta_hi;
};

inline Stage2Problem stage2_problem(Structure s, int d_max) {
  Stage2Problem p{s, d_max, param_count(s, d_max), {}, {}};
  const double hi = std::atanh(kRhoClamp);
  double lo = -hi;
  if (s == Structure::Exchangeable) lo = std::atanh(std::max(-kRhoClamp, exchangeable_lower_bound(d_max)));
  p.theta_lo.assign(p.q, lo);
  p.theta_hi.assign(p.q, hi);
  return p;
}

inline CorrelationModel model_from_theta(const Stage2Problem& p, const Eigen::VectorXd& theta) {
  std::vector<double> rho(p.q);
  for (int k = 0; k < p.q; ++k) rho[k] = std::tanh(theta[k]);
  return CorrelationModel::unchecked(p.structure, p.d_max, std::move(rho));
}

// Box clamp, then (unstructured) shrink toward the identity until PD. Returns true
// when the PD projection changed the point.
inline bool project_theta(const Stage2Problem& p, Eigen::VectorXd& theta) {
  for (int k = 0; k < p.q; ++k) theta[k] = std::clamp(theta[k], p.theta_lo[k], p.theta_hi[k]);
  if (p.structure != Structure::Unstructured || p.d_max < 3) return false;
  Eigen::MatrixXd r = model_from_theta(p, theta).expand_full();
  const double shrink = project_positive_definite(r);
  if (shrink == 0.0) return false;
  for (int j = 1; j <= p.d_max; ++j) {
    for (int k = j + 1; k <= p.d_max; ++k) theta[pair_index(j, k, p.d_max)] = std::atanh(r(j - 1, k - 1));
  }
  return true;
}

inline Eigen::MatrixXd numerical_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                         const Stage2Problem& p, const Eigen::VectorXd& theta) {
  const double h = 1e-4;
  Eigen::MatrixXd hess(p.q, p.q);
  for (int k = 0; k < p.q; ++k) {
    Eigen::VectorXd up = theta;
    Eigen::VectorXd dn = theta;
    up[k] = std::min(theta[k] + h, p.theta_hi[k]);
    dn[k] = std::max(theta[k] - h, p.theta_lo[k]);
    hess.col(k) = (grad(up) - grad(dn)) / (up[k] - dn[k]);
  }
  return 0.5 * (hess + hess.transpose());
}

// Inverse of the negated Hessian when it is negative definite, else a diagonal surrogate.
inline Eigen::MatrixXd ascent_metric(const Eigen::MatrixXd& hess) {
  const Eigen::MatrixXd neg = -hess;
  Eigen::LLT<Eigen::MatrixXd> llt(neg);
  if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(neg.rows(), neg.cols()));
  Eigen::VectorXd diag(neg.rows());
  for (Eigen::Index k = 0; k < neg.rows(); ++k) diag[k] = 1.0 / std::max(std::fabs(neg(k, k)), 1e-3);
  return diag.asDiagonal();
}

// Pairwise normal-score correlations at beta, clipped to (-0.95, 0.95).
inline std::vector<double> normal_score_start(const LongitudinalDataset& data, const ClusterCuts& cuts, int d_max) {
  const int q = param_count(Structure::Unstructured, d_max);
  std::vector<double> sx(q, 0.0), sy(q, 0.0), sxx(q, 0.0), syy(q, 0.0), sxy(q, 0.0), cnt(q, 0.0);
  auto score_of = [](const MarginCut& m) {
    const double mass = interval_probability(m.lower, m.upper);
    return mass > 0.0 ? (norm_pdf(m.lower) - norm_pdf(m.upper)) / mass : 0.0;
  };
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    for (int j = 0; j < c.size(); ++j) {
      for (int k = j + 1; k < c.size(); ++k) {
        const int idx = pair_index(c.occasions[j], c.occasions[k], d_max);
        const double a = score_of(cuts[i][j]);
        const double b = score_of(cuts[i][k]);
        sx[idx] += a; sy[idx] += b; sxx[idx] += a * a; syy[idx] += b * b; sxy[idx] += a * b; cnt[idx] += 1.0;
      }
    }
  }
  std::vector<double> rho(q, 0.0);
  for (int k = 0; k < q; ++k) {
    if (cnt[k] < 3.0) continue;
    const double vx = sxx[k] - sx[k] * sx[k] / cnt[k];
    const double vy = syy[k] - sy[k] * sy[k] / cnt[k];
    const double cv = sxy[k] - sx[k] * sy[k] / cnt[k];
    if (vx > 0.0 && vy > 0.0) rho[k] = std::clamp(cv / std::sqrt(vx * vy), -0.95, 0.95);
  }
  return rho;
}

}  // namespace detail

/// Stage 1 then stage 2. Independence makes stage 2 a no-op evaluated at R = I.
inline Cl1Fit fit_cl1(const LongitudinalDataset& data, Structure structure, const EstimationOptions& opts = {},
                      const Eigen::VectorXd& beta0 = {}) {
  data.validate();
  Cl1Fit fit;
  const auto stage1 = fit_univariate_detailed(data, beta0.size() == data.p() ? beta0 : Eigen::VectorXd::Zero(data.p()), opts);
  fit.beta = stage1.beta;
  fit.stage1_iterations = stage1.iterations;
  fit.stage1_converged = stage1.converged;
  fit.stage1_score_norm = stage1.score_norm;
  fit.L1 = univariate_loglik(data, fit.beta);

  const int d_max = data.d_max();
  const auto cuts = prepare_cuts(data, fit.beta);
  const auto problem = detail::stage2_problem(structure, d_max);

  if (problem.q == 0) {
    fit.corr = CorrelationModel::unchecked(structure, d_max, {});
    fit.L2 = detail::pair_loglik_from_cuts(data, cuts, fit.corr, opts.workers);
    fit.stage2_converged = true;
    fit.stage2_trace.push_back(fit.L2);
    return fit;
  }

  auto objective = [&](const Eigen::VectorXd& theta) {
    return detail::pair_loglik_from_cuts(data, cuts, detail::model_from_theta(problem, theta), opts.workers);
  };
  auto gradient = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    const auto model = detail::model_from_theta(problem, theta);
    Eigen::VectorXd g = detail::pair_score_from_cuts(data, cuts, model, opts.workers);
    for (int k = 0; k < problem.q; ++k) g[k] *= 1.0 - model.params()[k] * model.params()[k];
    return g;
  };

  Eigen::VectorXd theta(problem.q);
  if (structure == Structure::Unstructured) {
    const auto rho0 = detail::normal_score_start(data, cuts, d_max);
    for (int k = 0; k < problem.q; ++k) theta[k] = std::atanh(rho0[k]);
  } else {
    theta.setConstant(std::atanh(opts.rho_init));
  }
  bool projected = detail::project_theta(problem, theta);

  double f = objective(theta);
  Eigen::VectorXd g = gradient(theta);
  Eigen::MatrixXd metric = detail::ascent_metric(detail::numerical_hessian(gradient, problem, theta));
  bool fresh_metric = true;
  fit.stage2_trace.push_back(f);

  auto free_gradient_norm = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& gr) {
    double m = 0.0;
    for (int k = 0; k < problem.q; ++k) {
      const bool at_lo = th[k] <= problem.theta_lo[k] && gr[k] < 0.0;
      const bool at_hi = th[k] >= problem.theta_hi[k] && gr[k] > 0.0;
      if (!at_lo && !at_hi) m = std::max(m, std::fabs(gr[k]));
    }
    return m;
  };

  int it = 0;
  for (; it < opts.stage2_max_iter; ++it) {
    fit.stage2_gradient_norm = free_gradient_norm(theta, g);
    if (fit.stage2_gradient_norm <= opts.stage2_tol) {
      fit.stage2_converged = true;
      break;
    }
    Eigen::VectorXd dir = metric * g;
    if (g.dot(dir) <= 0.0) {
      metric = detail::ascent_metric(detail::numerical_hessian(gradient, problem, theta));
      fresh_metric = true;
      dir = metric * g;
      if (g.dot(dir) <= 0.0) dir = g;
    }
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    double f_cand = f;
    bool cand_projected = false;
    for (int half = 0; half < 50; ++half, t *= 0.5) {
      cand = theta + t * dir;
      cand_projected = detail::project_theta(problem, cand);
      const Eigen::VectorXd move = cand - theta;
      if (move.cwiseAbs().maxCoeff() < 1e-15) break;
      f_cand = objective(cand);
      if (std::isfinite(f_cand) && f_cand >= f + 1e-4 * g.dot(move)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh_metric) {
        metric = detail::ascent_metric(detail::numerical_hessian(gradient, problem, theta));
        fresh_metric = true;
        continue;
      }
      // No ascent possible from here: a constrained optimum (clamp or PD face).
      fit.stage2_converged = projected || free_gradient_norm(theta, g) <= opts.stage2_tol * 1e3;
      break;
    }
    const Eigen::VectorXd g_new = gradient(cand);
    const Eigen::VectorXd s = cand - theta;
    const Eigen::VectorXd y = g - g_new;  // gradient change of the minimized function -L2
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho_b = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(problem.q, problem.q);
      metric = (eye - rho_b * s * y.transpose()) * metric * (eye - rho_b * y * s.transpose()) +
               rho_b * s * s.transpose();
      fresh_metric = false;
    } else {
      metric = detail::ascent_metric(detail::numerical_hessian(gradient, problem, cand));
      fresh_metric = true;
    }
    theta = cand;
    f = f_cand;
    g = g_new;
    projected = cand_projected;
    fit.stage2_trace.push_back(f);
  }
  fit.stage2_iterations = it;
  fit.stage2_gradient_norm = free_gradient_norm(theta, g);
  if (!fit.stage2_converged) {
    std::ostringstream msg;
    msg << "pairwise likelihood maximization (" << structure_name(structure) << ") did not converge after " << it
        << " iterations; gradient " << fit.stage2_gradient_norm << "; L2 trace";
    for (double v : fit.stage2_trace) msg << ' ' << v;
    std::vector<double> last(theta.data(), theta.data() + theta.size());
    for (double& v : last) v = std::tanh(v);
    throw NumericalError(msg.str(), last);
  }

  for (int k = 0; k < problem.q; ++k) {
    if (theta[k] <= problem.theta_lo[k] || theta[k] >= problem.theta_hi[k]) fit.boundary = true;
  }
  fit.boundary = fit.boundary || projected;
  const auto model = detail::model_from_theta(problem, theta);
  fit.corr = structure == Structure::Unstructured && d_max >= 3
                 ? CorrelationModel(structure, d_max, model.params())
                 : CorrelationModel::unchecked(structure, d_max, model.params());
  fit.L2 = f;
  return fit;
}

}  // namespace wscl
