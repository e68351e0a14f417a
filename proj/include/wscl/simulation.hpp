#pragma once
// Correlated binary and count panels from the discretized normal model, and
// replicate studies tallying which candidate each criterion selects.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "wscl/correlation.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/glm_margins.hpp"
#include "wscl/godambe.hpp"
#include "wscl/options.hpp"
#include "wscl/parallel.hpp"
#include "wscl/rng.hpp"

namespace wscl {

enum class CovariateKind { Intercept, Bernoulli, Time, Uniform };

struct CovariateGen {
  std::string name;
  CovariateKind kind = CovariateKind::Intercept;
  double param = 0.5;  // success probability, or half-width of the uniform interval
};

struct SimDesign {
  std::string name = "custom";
  int n = 100;
  int d = 3;
  MarginFamily family = MarginFamily::BernoulliLogit;
  Eigen::VectorXd beta_true;
  std::vector<CovariateGen> covariates;
  CorrelationModel corr_true;
  int B = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1) throw ConfigError("design needs n >= 1");
    if (d < 1 || d > kMaxMvnDimension) throw ConfigError("design needs 1 <= d <= 8");
    if (B < 1) throw ConfigError("design needs B >= 1 replicates");
    if (static_cast<std::size_t>(beta_true.size()) != covariates.size()) {
      throw ConfigError("design has " + std::to_string(covariates.size()) + " covariates but " +
                        std::to_string(beta_true.size()) + " coefficients");
    }
    if (corr_true.d_max() != d) throw ConfigError("design correlation dimension does not match d");
    Eigen::LLT<Eigen::MatrixXd> llt(corr_true.expand_full());
    if (llt.info() != Eigen::Success) throw ConfigError("design correlation matrix is not positive definite");
  }
};

/// Smallest y with F1(y; nu) >= Phi(z), compared on the latent scale.
inline int threshold_response(MarginFamily family, double nu, double z) {
  if (is_binary(family)) return z > cutpoint(family, 0, nu) ? 1 : 0;
  int y = 0;
  while (y < 100000000 && z > cutpoint(family, y, nu)) ++y;
  return y;
}

inline Cluster simulate_cluster(const SimDesign& design, const Eigen::MatrixXd& chol_lower, CounterRng& rng,
                                std::string id) {
  const int d = design.d;
  const auto p = static_cast<Eigen::Index>(design.covariates.size());
  Cluster c;
  c.id = std::move(id);
  c.occasions.resize(d);
  c.y.resize(d);
  c.X.resize(d, p);
  for (int j = 0; j < d; ++j) {
    c.occasions[j] = j + 1;
    for (Eigen::Index m = 0; m < p; ++m) {
      const auto& g = design.covariates[m];
      switch (g.kind) {
        case CovariateKind::Intercept: c.X(j, m) = 1.0; break;
        case CovariateKind::Bernoulli: c.X(j, m) = rng.bernoulli(g.param) ? 1.0 : 0.0; break;
        case CovariateKind::Time: c.X(j, m) = j; break;
        case CovariateKind::Uniform: c.X(j, m) = g.param * (2.0 * rng.uniform() - 1.0); break;
      }
    }
  }
  Eigen::VectorXd eps(d);
  for (int j = 0; j < d; ++j) eps[j] = rng.normal();
  const Eigen::VectorXd z = chol_lower * eps;
  const Eigen::VectorXd nu = c.X * design.beta_true;
  for (int j = 0; j < d; ++j) c.y[j] = threshold_response(design.family, nu[j], z[j]);
  return c;
}

inline Eigen::MatrixXd design_cholesky(const SimDesign& design) {
  Eigen::LLT<Eigen::MatrixXd> llt(design.corr_true.expand_full());
  if (llt.info() != Eigen::Success) throw ConfigError("design correlation matrix is not positive definite");
  return llt.matrixL();
}

/// Replicate r of the design. Cluster i draws from the stream keyed (seed, r, i).
inline LongitudinalDataset simulate_dataset(const SimDesign& design, int replicate) {
  design.validate();
  const Eigen::MatrixXd l = design_cholesky(design);
  LongitudinalDataset data;
  data.family = design.family;
  data.intercept = !design.covariates.empty() && design.covariates.front().kind == CovariateKind::Intercept;
  for (const auto& g : design.covariates) data.covariate_names.push_back(g.name);
  data.clusters.reserve(design.n);
  for (int i = 0; i < design.n; ++i) {
    CounterRng rng(design.seed, static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(i));
    data.clusters.push_back(simulate_cluster(design, l, rng, std::to_string(i + 1)));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Named designs

inline CorrelationModel unstructured_design_matrix() {
  return {Structure::Unstructured, 3, {-0.5, -0.3, 0.3}};
}

inline CorrelationModel design_correlation(Structure s, int d) {
  switch (s) {
    case Structure::Independence: return CorrelationModel::independence(d);
    case Structure::Exchangeable: return {Structure::Exchangeable, d, {0.5}};
    case Structure::AR1: return {Structure::AR1, d, {0.5}};
    case Structure::Unstructured:
      if (d != 3) throw ConfigError("the unstructured study matrix is defined for d = 3");
      return unstructured_design_matrix();
  }
  return CorrelationModel::independence(d);
}

inline std::vector<std::string> design_names() {
  return {"table3-ex", "table3-ar1", "table3-un", "table4-ex", "table4-ar1", "table4-un"};
}

/// Structure-selection designs (table3-*): n = 100, x = (1, Bernoulli(1/2), j - 1).
/// Variable-selection designs (table4-*): n = 200 with two extra null U(-1, 1) columns.
inline SimDesign named_design(std::string_view name, int B = 200, std::uint64_t seed = 1) {
  SimDesign design;
  design.name = std::string(name);
  design.B = B;
  design.seed = seed;
  design.d = 3;
  design.family = MarginFamily::BernoulliLogit;
  std::string_view tail;
  if (name.starts_with("table3-")) {
    design.n = 100;
    tail = name.substr(7);
    design.covariates = {{"(Intercept)", CovariateKind::Intercept},
                         {"x1", CovariateKind::Bernoulli, 0.5},
                         {"time", CovariateKind::Time}};
    design.beta_true = Eigen::Vector3d(0.25, -0.25, -0.25);
  } else if (name.starts_with("table4-")) {
    design.n = 200;
    tail = name.substr(7);
    design.covariates = {{"(Intercept)", CovariateKind::Intercept},
                         {"x1", CovariateKind::Bernoulli, 0.5},
                         {"time", CovariateKind::Time},
                         {"x3", CovariateKind::Uniform, 1.0},
                         {"x4", CovariateKind::Uniform, 1.0}};
    design.beta_true.resize(5);
    design.beta_true << 0.25, -0.25, -0.25, 0.0, 0.0;
  } else {
    throw ConfigError("unknown design '" + std::string(name) + "'");
  }
  Structure s;
  if (tail == "ex") {
    s = Structure::Exchangeable;
  } else if (tail == "ar1") {
    s = Structure::AR1;
  } else if (tail == "un") {
    s = Structure::Unstructured;
  } else {
    throw ConfigError("unknown design '" + std::string(name) + "'");
  }
  design.corr_true = design_correlation(s, design.d);
  if (B < 1) throw ConfigError("design needs B >= 1 replicates");
  return design;
}

/// Candidate covariate subsets of the variable-selection study, as column lists.
inline std::vector<Candidate> table4_subsets(Structure s) {
  return {{"x1", s, {0, 1}}, {"x12", s, {0, 1, 2}}, {"x13", s, {0, 1, 3}}, {"x123", s, {0, 1, 2, 3}},
          {"x1234", s, {0, 1, 2, 3, 4}}};
}

inline std::vector<Candidate> structure_candidates(const std::vector<Structure>& structures) {
  std::vector<Candidate> out;
  for (Structure s : structures) out.push_back({std::string(structure_tag(s)), s, {}});
  return out;
}

// ---------------------------------------------------------------------------
// Frequency tables

struct FrequencyTable {
  std::string design;
  std::string study;  // "structure" or "variable"
  int n = 0;
  int d = 0;
  int B = 0;
  std::uint64_t seed = 0;
  std::string true_structure;
  std::vector<std::string> labels;
  std::vector<std::string> criteria{"CL1AIC", "CL1BIC"};
  std::vector<std::vector<int>> counts;  // criteria x labels
  std::vector<int> failures;             // per criterion: replicates with no admissible winner
  std::vector<int> candidate_failures;   // per label: replicates in which that fit failed

  int count(std::string_view criterion, std::string_view label) const {
    for (std::size_t c = 0; c < criteria.size(); ++c) {
      if (criteria[c] != criterion) continue;
      for (std::size_t l = 0; l < labels.size(); ++l) {
        if (labels[l] == label) return counts[c][l];
      }
    }
    throw ConfigError("no entry for " + std::string(criterion) + " / " + std::string(label));
  }
  double rate(std::string_view criterion, std::string_view label) const {
    return static_cast<double>(count(criterion, label)) / B;
  }
};

struct ReplicateOutcome {
  std::string winner_aic;
  std::string winner_bic;
  std::vector<bool> failed;
};

inline FrequencyTable run_study(const SimDesign& design, const std::vector<Candidate>& candidates, std::string study,
                                const EstimationOptions& opts = {}) {
  design.validate();
  if (candidates.empty()) throw ConfigError("a study needs at least one candidate");
  FrequencyTable table;
  table.design = design.name;
  table.study = std::move(study);
  table.n = design.n;
  table.d = design.d;
  table.B = design.B;
  table.seed = design.seed;
  table.true_structure = std::string(structure_name(design.corr_true.structure()));
  for (const auto& c : candidates) table.labels.push_back(c.label);

  EstimationOptions inner = opts;
  inner.workers = 1;
  const auto outcomes = parallel_map<ReplicateOutcome>(
      design.B,
      [&](int r) {
        const LongitudinalDataset data = simulate_dataset(design, r);
        ReplicateOutcome out;
        out.failed.assign(candidates.size(), true);
        try {
          const SelectionReport rep = select(data, candidates, inner);
          out.winner_aic = rep.winner_aic;
          out.winner_bic = rep.winner_bic;
          for (std::size_t k = 0; k < candidates.size(); ++k) out.failed[k] = !rep.candidates[k].ok;
        } catch (const NumericalError&) {
        }
        return out;
      },
      opts.workers);

  const std::size_t nl = candidates.size();
  table.counts.assign(table.criteria.size(), std::vector<int>(nl, 0));
  table.failures.assign(table.criteria.size(), 0);
  table.candidate_failures.assign(nl, 0);
  auto tally = [&](std::size_t row, const std::string& winner) {
    for (std::size_t l = 0; l < nl; ++l) {
      if (table.labels[l] == winner) {
        ++table.counts[row][l];
        return;
      }
    }
    ++table.failures[row];
  };
  for (const auto& o : outcomes) {
    tally(0, o.winner_aic);
    tally(1, o.winner_bic);
    for (std::size_t l = 0; l < nl; ++l) table.candidate_failures[l] += o.failed[l] ? 1 : 0;
  }
  return table;
}

inline FrequencyTable run_structure_study(const SimDesign& design, const std::vector<Structure>& structures,
                                          const EstimationOptions& opts = {}) {
  return run_study(design, structure_candidates(structures), "structure", opts);
}

/// Each subset is fitted under the design's own correlation structure.
inline FrequencyTable run_variable_study(const SimDesign& design, std::vector<Candidate> subsets,
                                         const EstimationOptions& opts = {}) {
  for (auto& s : subsets) s.structure = design.corr_true.structure();
  return run_study(design, subsets, "variable", opts);
}

/// Clopper-Pearson interval for k successes out of n at the given confidence level.
inline std::pair<double, double> binomial_ci(int k, int n, double level = 0.99) {
  if (n < 1 || k < 0 || k > n) throw ConfigError("binomial_ci needs 0 <= k <= n and n >= 1");
  const double alpha = 1.0 - level;
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1, alpha / 2);
  const double hi = k == n ? 1.0 : boost::math::ibeta_inv(k + 1, n - k, 1.0 - alpha / 2);
  return {lo, hi};
}

}  // namespace wscl
