#pragma once
// Multivariate normal rectangle probabilities P(lower < Z <= upper), Z ~ N(0, R).
//
// Dimension 2 uses the bivariate cdf directly. Equicorrelated rectangles with
// rho >= 0 reduce to a one-dimensional integral over a common factor. Trivariate
// rectangles with general R condition on the first coordinate and integrate the
// bivariate conditional rectangle. Everything else goes through a randomized
// lattice rule on the Genz separation-of-variables transform.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wscl/errors.hpp"
#include "wscl/normal.hpp"
#include "wscl/rng.hpp"

namespace wscl {

inline constexpr int kMaxMvnDimension = 8;

using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxMvnDimension, 1>;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxMvnDimension, kMaxMvnDimension>;

struct Rectangle {
  SmallVector lower;
  SmallVector upper;
  SmallMatrix corr;

  int dim() const { return static_cast<int>(lower.size()); }
};

enum class Coordinate { First, Second };
enum class Bound { Lower, Upper };

struct QmcOptions {
  int randomizations = 8;
  int points = 4096;
  int escalations = 2;  // each multiplies the point count by 4
  double tolerance = 1e-5;
};

struct MvnResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  std::int64_t evaluations = 0;
};

inline double interval_probability(double lower, double upper) {
  if (upper <= lower) return 0.0;
  // Use the upper tail when both limits are positive to keep precision.
  if (lower > 0.0) return norm_cdf(-lower) - norm_cdf(-upper);
  return norm_cdf(upper) - norm_cdf(lower);
}

// ---------------------------------------------------------------------------
// Bivariate rectangles and their derivatives

inline double bvn_rectangle(double l1, double u1, double l2, double u2, double rho) {
  if (rho == 0.0) return interval_probability(l1, u1) * interval_probability(l2, u2);
  // Reflect upper-tail coordinates so the corner cdfs stay small and differences keep precision.
  if (l1 > 0.0) {
    std::swap(l1, u1);
    l1 = -l1;
    u1 = -u1;
    rho = -rho;
  }
  if (l2 > 0.0) {
    std::swap(l2, u2);
    l2 = -l2;
    u2 = -u2;
    rho = -rho;
  }
  const double p = bvn_cdf(u1, u2, rho) - bvn_cdf(l1, u2, rho) - bvn_cdf(u1, l2, rho) + bvn_cdf(l1, l2, rho);
  const bool finite1 = std::isfinite(l1) && std::isfinite(u1);
  const bool finite2 = std::isfinite(l2) && std::isfinite(u2);
  if (p < 1e-6 && (finite1 || finite2)) {
    // Small cells lose relative precision to corner cancellation; integrate the conditional mass instead.
    if (!finite1 || (finite2 && u2 - l2 < u1 - l1)) {
      std::swap(l1, l2);
      std::swap(u1, u2);
    }
    if (!(u1 > l1)) return 0.0;
    using rule = boost::math::quadrature::gauss<double, 20>;
    const double s = std::sqrt(1.0 - rho * rho);
    const int panels = static_cast<int>(std::ceil((u1 - l1) / std::min(0.5, 0.5 * s)));
    const double h = (u1 - l1) / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
      const double a = l1 + k * h;
      total += rule::integrate(
          [&](double x) { return norm_pdf(x) * interval_probability((l2 - rho * x) / s, (u2 - rho * x) / s); }, a, a + h);
    }
    return std::clamp(total, 0.0, 1.0);
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double bvn_rectangle(const Rectangle& rect) {
  if (rect.dim() != 2) throw ConfigError("bvn_rectangle needs a two-dimensional rectangle");
  return bvn_rectangle(rect.lower[0], rect.upper[0], rect.lower[1], rect.upper[1], rect.corr(0, 1));
}

/// d f2 / d rho by Plackett's identity; infinite corners contribute nothing.
inline double bvn_rectangle_drho(double l1, double u1, double l2, double u2, double rho) {
  return bvn_pdf(u1, u2, rho) - bvn_pdf(l1, u2, rho) - bvn_pdf(u1, l2, rho) + bvn_pdf(l1, l2, rho);
}

inline double bvn_rectangle_drho(const Rectangle& rect) {
  if (rect.dim() != 2) throw ConfigError("bvn_rectangle_drho needs a two-dimensional rectangle");
  return bvn_rectangle_drho(rect.lower[0], rect.upper[0], rect.lower[1], rect.upper[1], rect.corr(0, 1));
}

/// P(lower < Z2 <= upper | Z1 = z) for a standard bivariate normal with correlation rho.
inline double bvn_conditional_mass(double z, double lower, double upper, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  return interval_probability((lower - rho * z) / s, (upper - rho * z) / s);
}

/// Partial derivative of f2 with respect to one finite cutpoint.
inline double bvn_rectangle_dmargin(const Rectangle& rect, Coordinate which, Bound bound) {
  if (rect.dim() != 2) throw ConfigError("bvn_rectangle_dmargin needs a two-dimensional rectangle");
  const int a = which == Coordinate::First ? 0 : 1;
  const int b = 1 - a;
  const double z = bound == Bound::Upper ? rect.upper[a] : rect.lower[a];
  if (std::isinf(z)) throw ConfigError("derivative requested at an infinite cutpoint");
  const double rho = rect.corr(0, 1);
  const double d = norm_pdf(z) * bvn_conditional_mass(z, rect.lower[b], rect.upper[b], rho);
  return bound == Bound::Upper ? d : -d;
}

// ---------------------------------------------------------------------------
// Equicorrelated reduction

inline bool is_equicorrelated(const SmallMatrix& corr, double* rho_out = nullptr) {
  const auto d = corr.rows();
  if (d < 2) {
    if (rho_out) *rho_out = 0.0;
    return true;
  }
  const double rho = corr(0, 1);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a + 1; b < d; ++b) {
      if (std::fabs(corr(a, b) - rho) > 1e-14) return false;
    }
  }
  if (rho_out) *rho_out = rho;
  return true;
}

/// Rectangle probability for an equicorrelated R with common rho in [0, 1):
/// integral of phi(t) prod_j [Phi((u_j - sqrt(rho) t) / sqrt(1-rho)) - Phi((l_j - sqrt(rho) t) / sqrt(1-rho))].
inline double mvn_rectangle_exchangeable(const SmallVector& lower, const SmallVector& upper, double rho) {
  if (rho < 0.0) throw ConfigError("one-dimensional reduction requires rho >= 0");
  if (!(rho < 1.0)) throw ConfigError("one-dimensional reduction requires rho < 1");
  const auto d = lower.size();
  if (rho == 0.0 || d == 1) {
    double p = 1.0;
    for (Eigen::Index j = 0; j < d; ++j) p *= interval_probability(lower[j], upper[j]);
    return p;
  }
  const double a = std::sqrt(rho);
  const double s = std::sqrt(1.0 - rho);
  auto integrand = [&](double t) {
    double v = norm_pdf(t);
    for (Eigen::Index j = 0; j < d && v > 0.0; ++j) {
      v *= interval_probability((lower[j] - a * t) / s, (upper[j] - a * t) / s);
    }
    return v;
  };
  double err = 0.0;
  const double p = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -9.0, 9.0, 20, 1e-13, &err);
  return std::clamp(p, 0.0, 1.0);
}

inline double mvn_rectangle_exchangeable(const Rectangle& rect, double rho) {
  return mvn_rectangle_exchangeable(rect.lower, rect.upper, rho);
}

// ---------------------------------------------------------------------------
// Trivariate rectangles by conditioning on the first coordinate

inline double mvn_rectangle_trivariate(const Rectangle& rect) {
  if (rect.dim() != 3) throw ConfigError("mvn_rectangle_trivariate needs a three-dimensional rectangle");
  const double r12 = rect.corr(0, 1);
  const double r13 = rect.corr(0, 2);
  const double r23 = rect.corr(1, 2);
  const double s2 = std::sqrt(1.0 - r12 * r12);
  const double s3 = std::sqrt(1.0 - r13 * r13);
  const double partial = std::clamp((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0);
  const double lo = std::max(rect.lower[0], -9.0);
  const double hi = std::min(rect.upper[0], 9.0);
  if (hi <= lo) return 0.0;
  auto integrand = [&](double x) {
    return norm_pdf(x) * bvn_rectangle((rect.lower[1] - r12 * x) / s2, (rect.upper[1] - r12 * x) / s2,
                                       (rect.lower[2] - r13 * x) / s3, (rect.upper[2] - r13 * x) / s3, partial);
  };
  double err = 0.0;
  const double p = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 15, 1e-12, &err);
  return std::clamp(p, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Whole outcome tables
//
// A table is the set of rectangle probabilities over a product grid of cells,
// where bounds[a] lists the n_a + 1 increasing boundaries of coordinate a. A
// single one-dimensional integral serves every cell at once.

namespace detail {

struct QuadratureNode {
  double x;
  double w;
};

/// Composite 20-point Gauss-Legendre nodes on [lo, hi] with panels no wider than width,
/// split at the given breakpoints.
inline std::vector<QuadratureNode> composite_nodes(double lo, double hi, double width, const std::vector<double>& breaks) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> edges{lo};
  for (double b : breaks) {
    if (b > lo && b < hi) edges.push_back(b);
  }
  edges.push_back(hi);
  std::sort(edges.begin(), edges.end());
  std::vector<QuadratureNode> nodes;
  const auto& abs = rule::abscissa();
  const auto& wts = rule::weights();
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double len = edges[e + 1] - edges[e];
    if (len <= 0.0) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil(len / width)));
    const double h = len / panels;
    for (int k = 0; k < panels; ++k) {
      const double mid = edges[e] + (k + 0.5) * h;
      const double half = 0.5 * h;
      for (std::size_t i = 0; i < abs.size(); ++i) {
        if (abs[i] == 0.0) {
          nodes.push_back({mid, half * wts[i]});
        } else {
          nodes.push_back({mid - half * abs[i], half * wts[i]});
          nodes.push_back({mid + half * abs[i], half * wts[i]});
        }
      }
    }
  }
  return nodes;
}

inline constexpr double kTableRange = 9.0;

}  // namespace detail

/// Trivariate table, row-major over (a, b, c): condition on the first coordinate and
/// difference the bivariate conditional cdf grid at every node.
inline std::vector<double> trivariate_table(const std::array<std::vector<double>, 3>& bounds, const SmallMatrix& corr) {
  const double r12 = corr(0, 1);
  const double r13 = corr(0, 2);
  const double r23 = corr(1, 2);
  const double s2 = std::sqrt(1.0 - r12 * r12);
  const double s3 = std::sqrt(1.0 - r13 * r13);
  const double partial = std::clamp((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0);
  const std::size_t n1 = bounds[0].size() - 1, n2 = bounds[1].size() - 1, n3 = bounds[2].size() - 1;
  std::vector<double> out(n1 * n2 * n3, 0.0);
  const double width = std::min(0.5, 0.5 * std::min({s2, s3, std::sqrt(1.0 - partial * partial) + 0.05}));
  std::vector<double> grid((n2 + 1) * (n3 + 1));
  for (std::size_t a = 0; a < n1; ++a) {
    const double lo = std::max(bounds[0][a], -detail::kTableRange);
    const double hi = std::min(bounds[0][a + 1], detail::kTableRange);
    if (!(hi > lo)) continue;
    for (const auto& [x, w] : detail::composite_nodes(lo, hi, width, {})) {
      const double fx = w * norm_pdf(x);
      for (std::size_t b = 0; b <= n2; ++b) {
        const double zb = (bounds[1][b] - r12 * x) / s2;
        for (std::size_t c = 0; c <= n3; ++c) {
          grid[b * (n3 + 1) + c] = bvn_cdf(zb, (bounds[2][c] - r13 * x) / s3, partial);
        }
      }
      double* cell = out.data() + a * n2 * n3;
      for (std::size_t b = 0; b < n2; ++b) {
        for (std::size_t c = 0; c < n3; ++c) {
          const double v = grid[(b + 1) * (n3 + 1) + c + 1] - grid[b * (n3 + 1) + c + 1] -
                           grid[(b + 1) * (n3 + 1) + c] + grid[b * (n3 + 1) + c];
          cell[b * n3 + c] += fx * v;
        }
      }
    }
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// Equicorrelated table (rho in [0, 1)), row-major, through the common-factor integral.
inline std::vector<double> exchangeable_table(const std::vector<std::vector<double>>& bounds, double rho) {
  if (rho < 0.0 || !(rho < 1.0)) throw ConfigError("one-dimensional reduction requires 0 <= rho < 1");
  const std::size_t m = bounds.size();
  std::size_t cells = 1;
  for (const auto& b : bounds) cells *= b.size() - 1;
  std::vector<double> out(cells, 0.0);
  const double a = std::sqrt(rho);
  const double s = std::sqrt(1.0 - rho);
  const double width = std::min(0.5, 0.5 * s / std::max(a, 1e-3));
  std::vector<std::vector<double>> mass(m);
  for (const auto& [t, w] : detail::composite_nodes(-detail::kTableRange, detail::kTableRange, width, {})) {
    for (std::size_t j = 0; j < m; ++j) {
      mass[j].resize(bounds[j].size() - 1);
      for (std::size_t k = 0; k + 1 < bounds[j].size(); ++k) {
        mass[j][k] = interval_probability((bounds[j][k] - a * t) / s, (bounds[j][k + 1] - a * t) / s);
      }
    }
    const double ft = w * norm_pdf(t);
    std::vector<std::size_t> coord(m, 0);
    for (std::size_t c = 0; c < cells; ++c) {
      double v = ft;
      for (std::size_t j = 0; j < m && v > 0.0; ++j) v *= mass[j][coord[j]];
      out[c] += v;
      for (std::size_t j = m; j-- > 0;) {
        if (++coord[j] < mass[j].size()) break;
        coord[j] = 0;
      }
    }
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Randomized quasi-Monte Carlo for general correlation

namespace detail {

inline constexpr std::array<double, 16> kRichtmyerPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

// Variable reordering with Cholesky factor (Genz & Bretz): at each step pick the
// remaining coordinate with the smallest conditional interval probability.
struct OrderedProblem {
  SmallVector lower;
  SmallVector upper;
  SmallMatrix chol;
};

inline OrderedProblem reorder_and_factor(const Rectangle& rect) {
  const int d = rect.dim();
  OrderedProblem out{rect.lower, rect.upper, SmallMatrix::Zero(d, d)};
  SmallMatrix r = rect.corr;
  SmallVector y = SmallVector::Zero(d);
  SmallMatrix& l = out.chol;
  for (int i = 0; i < d; ++i) {
    int best = i;
    double best_prob = 2.0;
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      double ss = 0.0;
      for (int k = 0; k < i; ++k) {
        s += l(j, k) * y[k];
        ss += l(j, k) * l(j, k);
      }
      const double den = std::sqrt(std::max(r(j, j) - ss, 1e-300));
      const double prob = interval_probability((out.lower[j] - s) / den, (out.upper[j] - s) / den);
      if (prob < best_prob) {
        best_prob = prob;
        best = j;
      }
    }
    if (best != i) {
      std::swap(out.lower[i], out.lower[best]);
      std::swap(out.upper[i], out.upper[best]);
      r.row(i).swap(r.row(best));
      r.col(i).swap(r.col(best));
      l.row(i).swap(l.row(best));
    }
    double ss = 0.0;
    for (int k = 0; k < i; ++k) ss += l(i, k) * l(i, k);
    const double diag = r(i, i) - ss;
    if (!(diag > 1e-12)) throw NumericalError("correlation matrix is numerically singular");
    l(i, i) = std::sqrt(diag);
    for (int m = i + 1; m < d; ++m) {
      double acc = r(m, i);
      for (int k = 0; k < i; ++k) acc -= l(m, k) * l(i, k);
      l(m, i) = acc / l(i, i);
    }
    double s = 0.0;
    for (int k = 0; k < i; ++k) s += l(i, k) * y[k];
    const double a = (out.lower[i] - s) / l(i, i);
    const double b = (out.upper[i] - s) / l(i, i);
    const double mass = interval_probability(a, b);
    if (mass > 1e-300) {
      y[i] = (norm_pdf(a) - norm_pdf(b)) / mass;
    } else {
      y[i] = std::isinf(a) ? b : (std::isinf(b) ? a : 0.5 * (a + b));
    }
  }
  return out;
}

inline double genz_integrand(const OrderedProblem& prob, const double* w) {
  const int d = static_cast<int>(prob.lower.size());
  std::array<double, kMaxMvnDimension> y{};
  double lo = norm_cdf(prob.lower[0] / prob.chol(0, 0));
  double hi = norm_cdf(prob.upper[0] / prob.chol(0, 0));
  double f = hi - lo;
  for (int i = 1; i < d && f > 0.0; ++i) {
    y[i - 1] = norm_quantile(lo + w[i - 1] * (hi - lo));
    if (std::isinf(y[i - 1])) y[i - 1] = std::copysign(37.0, y[i - 1]);
    double s = 0.0;
    for (int k = 0; k < i; ++k) s += prob.chol(i, k) * y[k];
    lo = norm_cdf((prob.lower[i] - s) / prob.chol(i, i));
    hi = norm_cdf((prob.upper[i] - s) / prob.chol(i, i));
    f *= std::max(hi - lo, 0.0);
  }
  return f;
}

}  // namespace detail

/// Randomized lattice estimate; deterministic given `seed`. The reported error is
/// the standard error across randomizations.
inline MvnResult mvn_rectangle_general(const Rectangle& rect, std::uint64_t seed, const QmcOptions& opts = {}) {
  const int d = rect.dim();
  if (d < 1 || d > kMaxMvnDimension) throw ConfigError("general MVN rectangle supports dimensions 1..8");
  if (opts.randomizations < 2 || opts.points < 1) throw ConfigError("QMC budget needs >= 2 randomizations and >= 1 point");
  MvnResult result;
  if (d == 1) {
    result.value = interval_probability(rect.lower[0], rect.upper[0]);
    return result;
  }
  const auto problem = detail::reorder_and_factor(rect);
  std::array<double, kMaxMvnDimension> alpha{};
  for (int m = 0; m < d - 1; ++m) alpha[m] = std::fmod(std::sqrt(detail::kRichtmyerPrimes[m]), 1.0);

  int points = opts.points;
  for (int attempt = 0; attempt <= opts.escalations; ++attempt) {
    CounterRng rng(seed, static_cast<std::uint64_t>(attempt), 0x6d766e);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int rep = 0; rep < opts.randomizations; ++rep) {
      std::array<double, kMaxMvnDimension> shift{};
      for (int m = 0; m < d - 1; ++m) shift[m] = rng.uniform();
      double acc = 0.0;
      std::array<double, kMaxMvnDimension> w{};
      for (int k = 1; k <= points; ++k) {
        for (int m = 0; m < d - 1; ++m) {
          const double frac = std::fmod(k * alpha[m] + shift[m], 1.0);
          w[m] = std::fabs(2.0 * frac - 1.0);
        }
        acc += detail::genz_integrand(problem, w.data());
      }
      const double mean_rep = acc / points;
      sum += mean_rep;
      sum_sq += mean_rep * mean_rep;
    }
    const double n = opts.randomizations;
    const double mean = sum / n;
    const double var = std::max(sum_sq / n - mean * mean, 0.0) * n / (n - 1.0);
    result.value = std::clamp(mean, 0.0, 1.0);
    result.error = std::sqrt(var / n);
    result.evaluations += static_cast<std::int64_t>(points) * opts.randomizations;
    result.converged = result.error <= opts.tolerance;
    if (result.converged) break;
    points *= 4;
  }
  return result;
}

struct MvnOptions {
  QmcOptions qmc;
  std::uint64_t seed = 20240611;
  bool use_exchangeable_reduction = true;
  bool use_trivariate_conditioning = true;
};

/// Dispatching rectangle probability: closed forms and deterministic reductions
/// where they apply, QMC otherwise.
inline MvnResult mvn_rectangle(const Rectangle& rect, const MvnOptions& opts = {}) {
  const int d = rect.dim();
  MvnResult r;
  if (d == 1) {
    r.value = interval_probability(rect.lower[0], rect.upper[0]);
    return r;
  }
  if (d == 2) {
    r.value = bvn_rectangle(rect);
    return r;
  }
  double rho = 0.0;
  if (opts.use_exchangeable_reduction && is_equicorrelated(rect.corr, &rho) && rho >= 0.0) {
    r.value = mvn_rectangle_exchangeable(rect, rho);
    return r;
  }
  if (d == 3 && opts.use_trivariate_conditioning) {
    r.value = mvn_rectangle_trivariate(rect);
    return r;
  }
  return mvn_rectangle_general(rect, opts.seed, opts.qmc);
}

}  // namespace wscl
