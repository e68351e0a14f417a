#pragma once
// Parametric latent correlation structures over occasions 1..d_max.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wscl/errors.hpp"

namespace wscl {

enum class Structure : std::uint8_t { Independence, Exchangeable, AR1, Unstructured };

inline constexpr double kRhoClamp = 0.99;
inline constexpr double kExchangeableMargin = 1e-6;
inline constexpr double kMinEigenvalue = 1e-6;

inline std::string_view structure_name(Structure s) {
  switch (s) {
    case Structure::Independence: return "ind";
    case Structure::Exchangeable: return "exch";
    case Structure::AR1: return "ar1";
    case Structure::Unstructured: return "unstr";
  }
  return "?";
}

/// Short upper-case tag used in frequency tables (IN, EX, AR, UN).
inline std::string_view structure_tag(Structure s) {
  switch (s) {
    case Structure::Independence: return "IN";
    case Structure::Exchangeable: return "EX";
    case Structure::AR1: return "AR";
    case Structure::Unstructured: return "UN";
  }
  return "?";
}

inline Structure parse_structure(std::string_view name) {
  if (name == "ind" || name == "in" || name == "independence") return Structure::Independence;
  if (name == "exch" || name == "ex" || name == "exchangeable") return Structure::Exchangeable;
  if (name == "ar1" || name == "ar") return Structure::AR1;
  if (name == "unstr" || name == "un" || name == "unstructured") return Structure::Unstructured;
  throw ConfigError("unknown correlation structure '" + std::string(name) + "' (expected ind, exch, ar1 or unstr)");
}

inline int param_count(Structure s, int d) {
  switch (s) {
    case Structure::Independence: return 0;
    case Structure::Exchangeable:
    case Structure::AR1: return 1;
    case Structure::Unstructured: return d * (d - 1) / 2;
  }
  return 0;
}

/// Position of occasion pair (j, k), 1 <= j < k <= d, in the order 12, 13, ..., 1d, 23, ...
inline int pair_index(int j, int k, int d) {
  if (j > k) std::swap(j, k);
  return (j - 1) * d - (j - 1) * j / 2 + (k - j - 1);
}

/// Open lower bound for an exchangeable correlation in dimension d, inclusive of the safety margin.
inline double exchangeable_lower_bound(int d) {
  return d <= 1 ? -1.0 + kExchangeableMargin : -1.0 / (d - 1) + kExchangeableMargin;
}

/// Shortest shrink toward the identity, (1 - a) R + a I, giving min eigenvalue >= floor.
/// Returns the shrink factor a (0 when R already qualifies).
inline double project_positive_definite(Eigen::MatrixXd& r, double floor = kMinEigenvalue) {
  if (r.rows() <= 1) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
  const double lambda = eig.eigenvalues().minCoeff();
  if (lambda >= floor) return 0.0;
  const double a = (floor - lambda) / (1.0 - lambda);
  const Eigen::Index d = r.rows();
  r = (1.0 - a) * r + a * Eigen::MatrixXd::Identity(d, d);
  return a;
}

class CorrelationModel {
 public:
  CorrelationModel() = default;

  CorrelationModel(Structure structure, int d_max, std::vector<double> params)
      : structure_(structure), d_max_(d_max), params_(std::move(params)) {
    if (d_max_ < 1) throw ConfigError("correlation model needs d_max >= 1");
    const int q = wscl::param_count(structure_, d_max_);
    if (static_cast<int>(params_.size()) != q) {
      throw ConfigError("structure " + std::string(structure_name(structure_)) + " with d_max=" +
                        std::to_string(d_max_) + " takes " + std::to_string(q) + " parameters, got " +
                        std::to_string(params_.size()));
    }
    validate();
  }

  static CorrelationModel independence(int d_max) { return {Structure::Independence, d_max, {}}; }

  /// Skips the positive-definiteness check. Pairwise quantities only need |rho_jk| < 1,
  /// so optimizers evaluate trial points through this path.
  static CorrelationModel unchecked(Structure structure, int d_max, std::vector<double> params) {
    CorrelationModel m;
    m.structure_ = structure;
    m.d_max_ = d_max;
    m.params_ = std::move(params);
    return m;
  }

  Structure structure() const noexcept { return structure_; }
  int d_max() const noexcept { return d_max_; }
  const std::vector<double>& params() const noexcept { return params_; }
  int param_count() const noexcept { return static_cast<int>(params_.size()); }

  double pair_correlation(int j, int k) const {
    if (j == k) return 1.0;
    switch (structure_) {
      case Structure::Independence: return 0.0;
      case Structure::Exchangeable: return params_[0];
      case Structure::AR1: return std::pow(params_[0], std::abs(j - k));
      case Structure::Unstructured: return params_[pair_index(j, k, d_max_)];
    }
    return 0.0;
  }

  /// Nonzero entries of d rho_jk / d params as (parameter index, derivative).
  std::vector<std::pair<int, double>> pair_gradient(int j, int k) const {
    switch (structure_) {
      case Structure::Independence: return {};
      case Structure::Exchangeable: return {{0, 1.0}};
      case Structure::AR1: {
        const int lag = std::abs(j - k);
        const double rho = params_[0];
        return {{0, lag == 1 ? 1.0 : lag * std::pow(rho, lag - 1)}};
      }
      case Structure::Unstructured: return {{pair_index(j, k, d_max_), 1.0}};
    }
    return {};
  }

  /// Correlation matrix among the given (sorted, distinct, 1-based) occasions.
  Eigen::MatrixXd expand(std::span<const int> occasions) const {
    const auto m = static_cast<Eigen::Index>(occasions.size());
    for (Eigen::Index a = 0; a < m; ++a) {
      if (occasions[a] < 1 || occasions[a] > d_max_) {
        throw ConfigError("occasion index " + std::to_string(occasions[a]) + " outside 1.." + std::to_string(d_max_));
      }
      if (a > 0 && occasions[a] <= occasions[a - 1]) throw ConfigError("occasion indices must be sorted and distinct");
    }
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = a + 1; b < m; ++b) {
        r(a, b) = r(b, a) = pair_correlation(occasions[a], occasions[b]);
      }
    }
    return r;
  }

  Eigen::MatrixXd expand_full() const {
    std::vector<int> all(d_max_);
    for (int j = 0; j < d_max_; ++j) all[j] = j + 1;
    return expand(all);
  }

 private:
  void validate() const {
    for (double v : params_) {
      if (!std::isfinite(v)) throw ConfigError("correlation parameters must be finite");
    }
    switch (structure_) {
      case Structure::Independence: return;
      case Structure::Exchangeable:
        if (!(params_[0] > -1.0 / std::max(1, d_max_ - 1) && params_[0] < 1.0)) {
          throw ConfigError("exchangeable correlation " + std::to_string(params_[0]) +
                            " not positive definite for d_max=" + std::to_string(d_max_));
        }
        return;
      case Structure::AR1:
        if (!(std::fabs(params_[0]) < 1.0)) throw ConfigError("AR(1) correlation must lie in (-1, 1)");
        return;
      case Structure::Unstructured: {
        if (d_max_ < 2) return;
        Eigen::LLT<Eigen::MatrixXd> llt(expand_full());
        if (llt.info() != Eigen::Success) throw ConfigError("unstructured correlation matrix is not positive definite");
        return;
      }
    }
  }

  Structure structure_ = Structure::Independence;
  int d_max_ = 1;
  std::vector<double> params_;
};

}  // namespace wscl
