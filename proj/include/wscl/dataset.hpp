#pragma once
// Clustered longitudinal data with GLM margins.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wscl/errors.hpp"
#include "wscl/glm_margins.hpp"

namespace wscl {

struct Cluster {
  std::string id;
  std::vector<int> occasions;  // sorted, distinct, 1-based
  std::vector<int> y;
  Eigen::MatrixXd X;           // size() x p

  int size() const { return static_cast<int>(y.size()); }

  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& beta) const { return X * beta; }
};

struct LongitudinalDataset {
  std::vector<Cluster> clusters;
  MarginFamily family = MarginFamily::BernoulliLogit;
  std::vector<std::string> covariate_names;  // one per column of X
  bool intercept = true;

  int n() const { return static_cast<int>(clusters.size()); }
  int p() const { return static_cast<int>(covariate_names.size()); }

  /// Largest occasion index, which fixes the dimension of the correlation model.
  int d_max() const {
    int d = 1;
    for (const auto& c : clusters) {
      if (!c.occasions.empty()) d = std::max(d, c.occasions.back());
    }
    return d;
  }

  int total_observations() const {
    int t = 0;
    for (const auto& c : clusters) t += c.size();
    return t;
  }

  void validate() const {
    if (clusters.empty()) throw ConfigError("dataset has no clusters");
    const auto cols = static_cast<Eigen::Index>(p());
    if (cols == 0) throw ConfigError("dataset has no covariates");
    for (const auto& c : clusters) {
      const auto d = static_cast<std::size_t>(c.size());
      if (d == 0) throw ConfigError("cluster '" + c.id + "' is empty");
      if (c.occasions.size() != d || static_cast<std::size_t>(c.X.rows()) != d || c.X.cols() != cols) {
        throw ConfigError("cluster '" + c.id + "' has inconsistent dimensions");
      }
      for (std::size_t j = 0; j < d; ++j) {
        if (c.occasions[j] < 1) throw ConfigError("cluster '" + c.id + "' has an occasion index below 1");
        if (j > 0 && c.occasions[j] <= c.occasions[j - 1]) {
          throw ConfigError("cluster '" + c.id + "' occasions must be sorted and distinct");
        }
        if (!in_support(family, c.y[j])) {
          throw ConfigError("cluster '" + c.id + "' response " + std::to_string(c.y[j]) + " outside the " +
                            std::string(family_name(family)) + " support");
        }
      }
      if (!c.X.allFinite()) throw ConfigError("cluster '" + c.id + "' has non-finite covariates");
    }
  }

  /// Same data restricted to the given covariate columns (in the given order).
  LongitudinalDataset select_columns(const std::vector<int>& columns) const {
    LongitudinalDataset out;
    out.family = family;
    out.intercept = intercept && !columns.empty() && columns.front() == 0;
    for (int c : columns) {
      if (c < 0 || c >= p()) throw ConfigError("covariate column " + std::to_string(c) + " out of range");
      out.covariate_names.push_back(covariate_names[c]);
    }
    out.clusters.reserve(clusters.size());
    for (const auto& c : clusters) {
      Cluster k{c.id, c.occasions, c.y, Eigen::MatrixXd(c.size(), static_cast<Eigen::Index>(columns.size()))};
      for (std::size_t m = 0; m < columns.size(); ++m) k.X.col(static_cast<Eigen::Index>(m)) = c.X.col(columns[m]);
      out.clusters.push_back(std::move(k));
    }
    return out;
  }

  /// Column index of a named covariate; throws when absent.
  int column_of(const std::string& name) const {
    const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
    if (it == covariate_names.end()) throw ConfigError("unknown covariate '" + name + "'");
    return static_cast<int>(it - covariate_names.begin());
  }

  /// Every observation's row stacked into one design matrix.
  Eigen::MatrixXd stacked_design() const {
    Eigen::MatrixXd x(total_observations(), p());
    Eigen::Index row = 0;
    for (const auto& c : clusters) {
      x.middleRows(row, c.size()) = c.X;
      row += c.size();
    }
    return x;
  }
};

}  // namespace wscl
