#pragma once
// Godambe information of the CL1 estimating functions g = (g1, g2) and the
// composite likelihood information criteria
//
//   CL1AIC = -2 L2 + 2 tr(J H^{-1}),   CL1BIC = -2 L2 + log(n) tr(J H^{-1}).
//
// With gamma the structure parameters and A_i the chain matrix d rho_pair / d gamma,
//
//   H = sum_i [ x' Delta1 x        0             ]   J = sum_i [ x' Omega1 x     x' Omega12 A ]
//             [ A' D12 x      A' diag(D2) A      ]             [ A' Omega21 x    A' Omega2 A  ]
//
// with every expectation taken by enumerating outcomes under the fitted
// discretized normal model.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wscl/cl1.hpp"
#include "wscl/correlation.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/mvn_integrals.hpp"
#include "wscl/options.hpp"
#include "wscl/outcome_tables.hpp"
#include "wscl/parallel.hpp"
#include "wscl/weighted_scores.hpp"

namespace wscl {

/// Per-cluster moments in linear-predictor and pair coordinates. Pairs are ordered
/// (0,1), (0,2), ..., (1,2), ... over the cluster's observed occasions.
struct ClusterMoments {
  Eigen::VectorXd delta;    // d: Fisher weights
  Eigen::MatrixXd d12;      // P x d: E[(dl2/drho)(dl2/dnu)]
  Eigen::VectorXd d2;       // P: E[(dl2/drho)^2]
  Eigen::MatrixXd omega1;   // d x d
  Eigen::MatrixXd omega12;  // d x P
  Eigen::MatrixXd omega2;   // P x P
  std::size_t cells = 0;
  bool qmc_unconverged = false;
};

struct GodambeMatrices {
  Eigen::MatrixXd H;
  Eigen::MatrixXd J;
  int p = 0;
  int q = 0;
  std::vector<std::string> warnings;

  Eigen::MatrixXd H_g1() const { return H.topLeftCorner(p, p); }
  Eigen::MatrixXd H_g12() const { return H.bottomLeftCorner(q, p); }
  Eigen::MatrixXd H_g2() const { return H.bottomRightCorner(q, q); }
  Eigen::MatrixXd J1() const { return J.topLeftCorner(p, p); }
  Eigen::MatrixXd J12() const { return J.topRightCorner(p, q); }
  Eigen::MatrixXd J2() const { return J.bottomRightCorner(q, q); }
};

namespace detail {

struct PairTable {
  int j = 0;
  int k = 0;
  int nk = 0;
  std::vector<double> f2, s2, dlj, dlk;  // indexed a * nk + b
};

inline PairTable pair_table(const MarginTable& tj, const MarginTable& tk, int j, int k, double rho) {
  PairTable t;
  t.j = j;
  t.k = k;
  t.nk = tk.size();
  const std::size_t cells = static_cast<std::size_t>(tj.size()) * tk.size();
  t.f2.resize(cells);
  t.s2.resize(cells);
  t.dlj.resize(cells);
  t.dlk.resize(cells);
  for (int a = 0; a < tj.size(); ++a) {
    for (int b = 0; b < tk.size(); ++b) {
      const PairCell c = bivariate_cell(tj.cut[a], tk.cut[b], rho);
      const std::size_t idx = static_cast<std::size_t>(a) * t.nk + b;
      const double f = std::max(c.f2, kProbabilityFloor);
      t.f2[idx] = c.f2;
      t.s2[idx] = c.df_drho / f;
      t.dlj[idx] = c.df_dnu1 / f;
      t.dlk[idx] = c.df_dnu2 / f;
    }
  }
  return t;
}

/// Joint pmf over the outcome grid of a subset of the cluster's observations.
struct JointTable {
  std::vector<int> members;  // local observation indices, ascending
  std::vector<int> extent;
  std::vector<double> prob;  // row-major over members
  bool unconverged = false;
};

inline JointTable joint_table(const std::vector<int>& members, const std::vector<MarginTable>& tables,
                              const Eigen::MatrixXd& corr, const MvnOptions& mvn) {
  JointTable t;
  t.members = members;
  const int m = static_cast<int>(members.size());
  std::size_t cells = 1;
  for (int idx : members) {
    t.extent.push_back(tables[idx].size());
    cells *= static_cast<std::size_t>(tables[idx].size());
  }
  Rectangle rect;
  rect.lower.resize(m);
  rect.upper.resize(m);
  rect.corr.resize(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) rect.corr(a, b) = corr(members[a], members[b]);
  }
  auto bounds_of = [&](int a) {
    const auto& tab = tables[members[a]];
    std::vector<double> b{tab.cut.front().lower};
    for (const auto& cut : tab.cut) b.push_back(cut.upper);
    return b;
  };
  if (m == 3 && mvn.use_trivariate_conditioning) {
    t.prob = trivariate_table({bounds_of(0), bounds_of(1), bounds_of(2)}, rect.corr);
    return t;
  }
  double rho = 0.0;
  if (m > 3 && mvn.use_exchangeable_reduction && is_equicorrelated(rect.corr, &rho) && rho >= 0.0) {
    std::vector<std::vector<double>> bounds;
    for (int a = 0; a < m; ++a) bounds.push_back(bounds_of(a));
    t.prob = exchangeable_table(bounds, rho);
    return t;
  }
  t.prob.resize(cells);
  std::vector<int> coord(m, 0);
  for (std::size_t c = 0; c < cells; ++c) {
    for (int a = 0; a < m; ++a) {
      const MarginCut& cut = tables[members[a]].cut[coord[a]];
      rect.lower[a] = cut.lower;
      rect.upper[a] = cut.upper;
    }
    const MvnResult r = mvn_rectangle(rect, mvn);
    t.prob[c] = r.value;
    t.unconverged = t.unconverged || !r.converged;
    for (int a = m - 1; a >= 0; --a) {
      if (++coord[a] < t.extent[a]) break;
      coord[a] = 0;
    }
  }
  return t;
}

/// Sum over the joint table of prob * fn(coordinate of each member).
template <class Fn>
double expect(const JointTable& t, Fn&& fn) {
  const int m = static_cast<int>(t.members.size());
  std::array<int, kMaxMvnDimension> coord{};
  double acc = 0.0;
  for (std::size_t c = 0; c < t.prob.size(); ++c) {
    acc += t.prob[c] * fn(coord);
    for (int a = m - 1; a >= 0; --a) {
      if (++coord[a] < t.extent[a]) break;
      coord[a] = 0;
    }
  }
  return acc;
}

inline int position_in(const std::vector<int>& members, int idx) {
  return static_cast<int>(std::find(members.begin(), members.end(), idx) - members.begin());
}

inline std::uint64_t moments_key_hash(const std::vector<int>& occasions, const Eigen::VectorXd& nu) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (int o : occasions) h = splitmix64(h ^ static_cast<std::uint64_t>(o));
  for (Eigen::Index j = 0; j < nu.size(); ++j) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(nu[j]));
  return h;
}

}  // namespace detail

/// Outcome-enumeration moments of one cluster with linear predictors nu.
inline ClusterMoments cluster_moments(MarginFamily family, const Eigen::VectorXd& nu, const std::vector<int>& occasions,
                                      const CorrelationModel& corr, const EstimationOptions& opts) {
  const int d = static_cast<int>(nu.size());
  const int npairs = d * (d - 1) / 2;
  const bool need_cov = corr.param_count() > 0;
  ClusterMoments m;
  m.delta.resize(d);
  for (int j = 0; j < d; ++j) m.delta[j] = fisher_weight(family, nu[j]);
  m.d12 = Eigen::MatrixXd::Zero(npairs, d);
  m.d2 = Eigen::VectorXd::Zero(npairs);
  m.omega1 = m.delta.asDiagonal();
  m.omega12 = Eigen::MatrixXd::Zero(d, npairs);
  m.omega2 = Eigen::MatrixXd::Zero(npairs, npairs);
  if (d == 1) return m;

  std::vector<MarginTable> tables;
  tables.reserve(d);
  for (int j = 0; j < d; ++j) tables.push_back(margin_table(family, nu[j], opts.poisson_tail));
  const Eigen::MatrixXd r = corr.expand(occasions);

  std::vector<detail::PairTable> pairs;
  pairs.reserve(npairs);
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      pairs.push_back(detail::pair_table(tables[j], tables[k], j, k, r(j, k)));
      m.cells += pairs.back().f2.size();
    }
  }

  for (int pi = 0; pi < npairs; ++pi) {
    const auto& pt = pairs[pi];
    const auto& tj = tables[pt.j];
    const auto& tk = tables[pt.k];
    double cov11 = 0.0, e_ss = 0.0, e_sj = 0.0, e_sk = 0.0, c_j = 0.0, c_k = 0.0;
    for (int a = 0; a < tj.size(); ++a) {
      for (int b = 0; b < tk.size(); ++b) {
        const std::size_t idx = static_cast<std::size_t>(a) * pt.nk + b;
        const double f = pt.f2[idx];
        const double s2 = pt.s2[idx];
        cov11 += f * tj.s1[a] * tk.s1[b];
        e_ss += f * s2 * s2;
        e_sj += f * s2 * pt.dlj[idx];
        e_sk += f * s2 * pt.dlk[idx];
        c_j += f * tj.s1[a] * s2;
        c_k += f * tk.s1[b] * s2;
      }
    }
    m.omega1(pt.j, pt.k) = m.omega1(pt.k, pt.j) = cov11;
    m.d2[pi] = e_ss;
    m.d12(pi, pt.j) = e_sj;
    m.d12(pi, pt.k) = e_sk;
    m.omega2(pi, pi) = e_ss;
    m.omega12(pt.j, pi) = c_j;
    m.omega12(pt.k, pi) = c_k;
  }
  if (!need_cov || d == 2) return m;

  MvnOptions mvn = opts.mvn;
  mvn.seed = opts.mvn.seed ^ detail::moments_key_hash(occasions, nu);
  std::map<std::vector<int>, detail::JointTable> joint;
  auto table_for = [&](std::vector<int> members) -> const detail::JointTable& {
    std::sort(members.begin(), members.end());
    auto it = joint.find(members);
    if (it == joint.end()) {
      auto t = detail::joint_table(members, tables, r, mvn);
      m.cells += t.prob.size();
      m.qmc_unconverged = m.qmc_unconverged || t.unconverged;
      it = joint.emplace(members, std::move(t)).first;
    }
    return it->second;
  };
  auto s2_at = [&](const detail::PairTable& pt, const detail::JointTable& t, const std::array<int, kMaxMvnDimension>& c) {
    const int a = c[detail::position_in(t.members, pt.j)];
    const int b = c[detail::position_in(t.members, pt.k)];
    return pt.s2[static_cast<std::size_t>(a) * pt.nk + b];
  };

  // Omega12 entries for a singleton outside the pair use the trivariate law.
  for (int pi = 0; pi < npairs; ++pi) {
    const auto& pt = pairs[pi];
    for (int l = 0; l < d; ++l) {
      if (l == pt.j || l == pt.k) continue;
      const auto& t = table_for({l, pt.j, pt.k});
      const int pos = detail::position_in(t.members, l);
      m.omega12(l, pi) = detail::expect(t, [&](const auto& c) { return tables[l].s1[c[pos]] * s2_at(pt, t, c); });
    }
  }
  // Omega2 off-diagonal: trivariate law for pairs sharing an index, four-variate otherwise.
  for (int pa = 0; pa < npairs; ++pa) {
    for (int pb = pa + 1; pb < npairs; ++pb) {
      const auto& x = pairs[pa];
      const auto& y = pairs[pb];
      std::vector<int> members{x.j, x.k, y.j, y.k};
      std::sort(members.begin(), members.end());
      members.erase(std::unique(members.begin(), members.end()), members.end());
      const auto& t = table_for(members);
      m.omega2(pa, pb) = m.omega2(pb, pa) =
          detail::expect(t, [&](const auto& c) { return s2_at(x, t, c) * s2_at(y, t, c); });
    }
  }
  return m;
}

/// Chain matrix d rho_pair / d gamma for the cluster's observed pairs.
inline Eigen::MatrixXd chain_matrix(const std::vector<int>& occasions, const CorrelationModel& corr) {
  const int d = static_cast<int>(occasions.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d * (d - 1) / 2, corr.param_count());
  int pi = 0;
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k, ++pi) {
      for (const auto& [idx, dr] : corr.pair_gradient(occasions[j], occasions[k])) a(pi, idx) += dr;
    }
  }
  return a;
}

inline GodambeMatrices godambe_matrices(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                        const CorrelationModel& corr, const EstimationOptions& opts = {}) {
  const int p = data.p();
  const int q = corr.param_count();
  GodambeMatrices g;
  g.p = p;
  g.q = q;

  // Clusters with identical occasions and linear predictors share their moments.
  std::vector<Eigen::VectorXd> nus(data.clusters.size());
  std::map<std::pair<std::vector<int>, std::vector<std::uint64_t>>, int> index_of;
  std::vector<int> slot(data.clusters.size());
  std::vector<int> representative;
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    nus[i] = c.X * beta;
    std::vector<std::uint64_t> bits(c.size());
    for (int j = 0; j < c.size(); ++j) bits[j] = std::bit_cast<std::uint64_t>(nus[i][j]);
    auto [it, fresh] = index_of.emplace(std::make_pair(c.occasions, std::move(bits)), static_cast<int>(representative.size()));
    if (fresh) representative.push_back(static_cast<int>(i));
    slot[i] = it->second;
  }
  const auto moments = parallel_map<ClusterMoments>(
      static_cast<int>(representative.size()),
      [&](int u) {
        const int i = representative[u];
        return cluster_moments(data.family, nus[i], data.clusters[i].occasions, corr, opts);
      },
      opts.workers);

  std::size_t cells = 0;
  bool unconverged = false;
  for (const auto& mo : moments) {
    cells += mo.cells;
    unconverged = unconverged || mo.qmc_unconverged;
  }

  std::vector<Eigen::MatrixXd> hparts(data.clusters.size());
  std::vector<Eigen::MatrixXd> jparts(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    const auto& c = data.clusters[i];
    const auto& mo = moments[slot[i]];
    const Eigen::MatrixXd& x = c.X;
    const Eigen::MatrixXd a = chain_matrix(c.occasions, corr);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p + q, p + q);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(p + q, p + q);
    h.topLeftCorner(p, p) = x.transpose() * mo.delta.asDiagonal() * x;
    j.topLeftCorner(p, p) = x.transpose() * mo.omega1 * x;
    if (q > 0 && a.rows() > 0) {
      h.bottomLeftCorner(q, p) = a.transpose() * mo.d12 * x;
      h.bottomRightCorner(q, q) = a.transpose() * mo.d2.asDiagonal() * a;
      const Eigen::MatrixXd j12 = x.transpose() * mo.omega12 * a;
      j.topRightCorner(p, q) = j12;
      j.bottomLeftCorner(q, p) = j12.transpose();
      j.bottomRightCorner(q, q) = a.transpose() * mo.omega2 * a;
    }
    hparts[i] = std::move(h);
    jparts[i] = std::move(j);
  }
  g.H = tree_sum<Eigen::MatrixXd>(hparts, Eigen::MatrixXd::Zero(p + q, p + q));
  g.J = tree_sum<Eigen::MatrixXd>(jparts, Eigen::MatrixXd::Zero(p + q, p + q));
  g.J = 0.5 * (g.J + g.J.transpose());

  if (cells > opts.cell_budget) {
    std::ostringstream msg;
    msg << "outcome enumeration used " << cells << " cells (budget " << opts.cell_budget << ")";
    g.warnings.push_back(msg.str());
  }
  if (unconverged) g.warnings.push_back("some quasi-Monte Carlo rectangle probabilities missed their error target");
  return g;
}

inline GodambeMatrices godambe_matrices(const LongitudinalDataset& data, const Cl1Fit& fit,
                                        const EstimationOptions& opts = {}) {
  if (!fit.stage1_converged || !fit.stage2_converged) throw ConfigError("Godambe matrices need a converged CL1 fit");
  if (fit.corr.d_max() > kMaxMvnDimension) throw ConfigError("Godambe matrices support at most 8 occasions");
  return godambe_matrices(data, fit.beta, fit.corr, opts);
}

inline Eigen::MatrixXd sensitivity_H(const LongitudinalDataset& data, const Cl1Fit& fit, const EstimationOptions& opts = {}) {
  return godambe_matrices(data, fit, opts).H;
}

inline Eigen::MatrixXd variability_J(const LongitudinalDataset& data, const Cl1Fit& fit, const EstimationOptions& opts = {}) {
  return godambe_matrices(data, fit, opts).J;
}

/// One-dependence-parameter form (exchangeable or AR(1)) where every expectation is a
/// sum over the full joint pmf of each cluster, with the scalar bivariate score
/// s2 = sum_{j<k} (dl2_jk/drho_jk)(drho_jk/drho).
inline GodambeMatrices one_parameter_godambe(const LongitudinalDataset& data, const Eigen::VectorXd& beta,
                                             const CorrelationModel& corr, const EstimationOptions& opts = {}) {
  if (corr.param_count() != 1) throw ConfigError("one_parameter_godambe needs an exchangeable or AR(1) model");
  const int p = data.p();
  GodambeMatrices g;
  g.p = p;
  g.q = 1;
  g.H = Eigen::MatrixXd::Zero(p + 1, p + 1);
  g.J = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (const auto& c : data.clusters) {
    const int d = c.size();
    if (d > kMaxMvnDimension) throw ConfigError("one_parameter_godambe supports at most 8 occasions");
    const Eigen::VectorXd nu = c.X * beta;
    std::vector<MarginTable> tables;
    for (int j = 0; j < d; ++j) tables.push_back(margin_table(data.family, nu[j], opts.poisson_tail));
    const Eigen::MatrixXd r = corr.expand(c.occasions);
    std::vector<int> members(d);
    for (int j = 0; j < d; ++j) members[j] = j;
    const auto joint = detail::joint_table(members, tables, r, opts.mvn);

    std::vector<detail::PairTable> pairs;
    std::vector<double> chain;
    for (int j = 0; j < d; ++j) {
      for (int k = j + 1; k < d; ++k) {
        pairs.push_back(detail::pair_table(tables[j], tables[k], j, k, r(j, k)));
        chain.push_back(corr.pair_gradient(c.occasions[j], c.occasions[k]).front().second);
      }
    }
    Eigen::VectorXd delta(d);
    for (int j = 0; j < d; ++j) delta[j] = fisher_weight(data.family, nu[j]);

    Eigen::VectorXd h21 = Eigen::VectorXd::Zero(p);
    double d2 = 0.0;
    Eigen::MatrixXd om1 = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd om12 = Eigen::VectorXd::Zero(d);
    double om2 = 0.0;
    std::array<int, kMaxMvnDimension> coord{};
    Eigen::VectorXd s1(d);
    for (std::size_t cell = 0; cell < joint.prob.size(); ++cell) {
      const double f = joint.prob[cell];
      for (int j = 0; j < d; ++j) s1[j] = tables[j].s1[coord[j]];
      double s2 = 0.0;
      for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const auto& pt = pairs[pi];
        const std::size_t idx = static_cast<std::size_t>(coord[pt.j]) * pt.nk + coord[pt.k];
        const double sp = pt.s2[idx] * chain[pi];
        s2 += sp;
        d2 += f * sp * sp;
        h21 += f * sp * (pt.dlj[idx] * c.X.row(pt.j).transpose() + pt.dlk[idx] * c.X.row(pt.k).transpose());
      }
      om1 += f * s1 * s1.transpose();
      om12 += f * s2 * s1;
      om2 += f * s2 * s2;
      for (int a = d - 1; a >= 0; --a) {
        if (++coord[a] < joint.extent[a]) break;
        coord[a] = 0;
      }
    }
    g.H.topLeftCorner(p, p) += c.X.transpose() * delta.asDiagonal() * c.X;
    g.H.block(p, 0, 1, p) += h21.transpose();
    g.H(p, p) += d2;
    om1.diagonal() = delta;
    g.J.topLeftCorner(p, p) += c.X.transpose() * om1 * c.X;
    const Eigen::VectorXd j12 = c.X.transpose() * om12;
    g.J.block(0, p, p, 1) += j12;
    g.J.block(p, 0, 1, p) += j12.transpose();
    g.J(p, p) += om2;
  }
  return g;
}

struct Criteria {
  double aic = 0.0;
  double bic = 0.0;
  double trace = 0.0;
};

/// tr(J H^{-1}) = tr(H^{-1} J) through a pivoted LU solve.
inline double penalty_trace(const Eigen::MatrixXd& H, const Eigen::MatrixXd& J) {
  if (H.rows() != H.cols() || J.rows() != H.rows() || J.cols() != H.cols()) {
    throw ConfigError("penalty trace needs square H and J of equal size");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (!lu.isInvertible()) throw NumericalError("sensitivity matrix H is singular");
  return lu.solve(J).trace();
}

inline Criteria cl1_criteria(double L2, const Eigen::MatrixXd& H, const Eigen::MatrixXd& J, double n) {
  if (!(n > 0.0)) throw ConfigError("criteria need a positive sample size");
  Criteria c;
  c.trace = penalty_trace(H, J);
  c.aic = -2.0 * L2 + 2.0 * c.trace;
  c.bic = -2.0 * L2 + std::log(n) * c.trace;
  return c;
}

// ---------------------------------------------------------------------------
// Candidate selection

struct Candidate {
  std::string label;
  Structure structure = Structure::Independence;
  std::vector<int> columns;  // empty: every column of the dataset
};

struct CandidateResult {
  std::string label;
  Structure structure = Structure::Independence;
  std::vector<std::string> covariates;
  bool ok = false;
  std::string error;
  int n_params = 0;
  double L2 = std::numeric_limits<double>::quiet_NaN();
  double trace = std::numeric_limits<double>::quiet_NaN();
  double aic = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
  Cl1Fit fit;
};

struct SelectionReport {
  std::vector<CandidateResult> candidates;
  std::string winner_aic;
  std::string winner_bic;
  std::string tie_rule = "fewer parameters, then label order";
};

inline CandidateResult evaluate_candidate(const LongitudinalDataset& data, const Candidate& cand,
                                          const EstimationOptions& opts = {}) {
  CandidateResult res;
  res.label = cand.label;
  res.structure = cand.structure;
  const LongitudinalDataset sub = cand.columns.empty() ? data : data.select_columns(cand.columns);
  res.covariates = sub.covariate_names;
  try {
    res.fit = fit_cl1(sub, cand.structure, opts);
    const GodambeMatrices g = godambe_matrices(sub, res.fit, opts);
    const Criteria crit = cl1_criteria(res.fit.L2, g.H, g.J, sub.n());
    res.n_params = g.p + g.q;
    res.L2 = res.fit.L2;
    res.trace = crit.trace;
    res.aic = crit.aic;
    res.bic = crit.bic;
    res.warnings = g.warnings;
    res.ok = std::isfinite(crit.aic) && std::isfinite(crit.bic);
    if (!res.ok) res.error = "non-finite criterion";
  } catch (const NumericalError& e) {
    res.error = e.what();
  } catch (const ConfigError& e) {
    res.error = e.what();
  }
  return res;
}

namespace detail {

inline std::string pick_winner(const std::vector<CandidateResult>& rs, double CandidateResult::*field) {
  const CandidateResult* best = nullptr;
  for (const auto& r : rs) {
    if (!r.ok || !std::isfinite(r.*field)) continue;
    if (best == nullptr || r.*field < best->*field ||
        (r.*field == best->*field &&
         (r.n_params < best->n_params || (r.n_params == best->n_params && r.label < best->label)))) {
      best = &r;
    }
  }
  return best ? best->label : std::string{};
}

}  // namespace detail

inline SelectionReport select(const LongitudinalDataset& data, const std::vector<Candidate>& candidates,
                              const EstimationOptions& opts = {}) {
  if (candidates.empty()) throw ConfigError("selection needs at least one candidate");
  SelectionReport report;
  report.candidates.reserve(candidates.size());
  for (const auto& cand : candidates) report.candidates.push_back(evaluate_candidate(data, cand, opts));
  report.winner_aic = detail::pick_winner(report.candidates, &CandidateResult::aic);
  report.winner_bic = detail::pick_winner(report.candidates, &CandidateResult::bic);
  if (report.winner_aic.empty()) {
    std::string why;
    for (const auto& r : report.candidates) why += "\n  " + r.label + ": " + r.error;
    throw NumericalError("every candidate failed" + why);
  }
  return report;
}

}  // namespace wscl
