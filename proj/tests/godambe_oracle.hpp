#pragma once
// Brute-force H and J for binary logit clusters of size <= 3 by enumerating every
// outcome vector. Rectangle probabilities come from the quadrature oracles and
// derivatives of the pairwise score from finite differences.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"

namespace oracle {

inline double Phi_inv(double p) {
  double x = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double step = (Phi(x) - p) / phi(x);
    x -= step;
    if (std::fabs(step) < 1e-15) break;
  }
  return x;
}

inline double phi2(double a, double b, double rho) {
  if (std::isinf(a) || std::isinf(b)) return 0.0;
  const double s = 1.0 - rho * rho;
  return std::exp(-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * s)) / (2.0 * std::numbers::pi * std::sqrt(s));
}

struct BinaryCell {
  double lo, hi;
};

/// Latent interval of a logit margin on the standard normal scale.
inline BinaryCell logit_cell(int y, double nu) {
  const double t = Phi_inv(1.0 - logistic(nu));
  return y ? BinaryCell{t, INFINITY} : BinaryCell{-INFINITY, t};
}

/// One-parameter dependence: rho(occ_j, occ_k; theta) and its derivative in theta.
struct OneParameter {
  std::function<double(int, int, double)> rho;
  std::function<double(int, int, double)> drho;
};

inline OneParameter exchangeable() {
  return {[](int, int, double t) { return t; }, [](int, int, double) { return 1.0; }};
}

inline OneParameter ar1() {
  return {[](int a, int b, double t) { return std::pow(t, std::abs(a - b)); },
          [](int a, int b, double t) {
            const int l = std::abs(a - b);
            return l * std::pow(t, l - 1);
          }};
}

struct BruteForce {
  Eigen::MatrixXd H, J;
};

/// Requires every cluster with three occasions to be equicorrelated (exchangeable, theta >= 0).
inline BruteForce godambe_brute_force(const std::vector<Eigen::MatrixXd>& xs, const std::vector<std::vector<int>>& occ,
                                      const Eigen::VectorXd& beta, double theta, const OneParameter& model) {
  const auto p = beta.size();
  const Eigen::Index m = p + 1;
  BruteForce out{Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m)};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    const int d = static_cast<int>(x.rows());
    auto g_of = [&](const std::vector<int>& y, const Eigen::VectorXd& par) {
      const Eigen::VectorXd b = par.head(p);
      const double t = par[p];
      const Eigen::VectorXd nu = x * b;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
      for (int j = 0; j < d; ++j) g.head(p) += x.row(j).transpose() * (y[j] - logistic(nu[j]));
      for (int j = 0; j < d; ++j) {
        for (int k = j + 1; k < d; ++k) {
          const auto cj = logit_cell(y[j], nu[j]);
          const auto ck = logit_cell(y[k], nu[k]);
          const double r = model.rho(occ[i][j], occ[i][k], t);
          const double f2 = bvn_rect(cj.lo, cj.hi, ck.lo, ck.hi, r);
          const double df = phi2(cj.hi, ck.hi, r) - phi2(cj.lo, ck.hi, r) - phi2(cj.hi, ck.lo, r) + phi2(cj.lo, ck.lo, r);
          g[p] += df / f2 * model.drho(occ[i][j], occ[i][k], t);
        }
      }
      return g;
    };
    Eigen::VectorXd par(m);
    par << beta, theta;
    const Eigen::VectorXd nu = x * beta;
    for (int mask = 0; mask < (1 << d); ++mask) {
      std::vector<int> y(d);
      std::vector<double> lo(d), hi(d);
      for (int j = 0; j < d; ++j) {
        y[j] = (mask >> j) & 1;
        const auto c = logit_cell(y[j], nu[j]);
        lo[j] = c.lo;
        hi[j] = c.hi;
      }
      double f;
      if (d == 1) {
        f = y[0] ? logistic(nu[0]) : 1.0 - logistic(nu[0]);
      } else if (d == 2) {
        f = bvn_rect(lo[0], hi[0], lo[1], hi[1], model.rho(occ[i][0], occ[i][1], theta));
      } else {
        f = exch_rect(lo, hi, model.rho(occ[i][0], occ[i][1], theta));
      }
      const Eigen::VectorXd g = g_of(y, par);
      out.J += f * g * g.transpose();
      for (Eigen::Index c = 0; c < m; ++c) {
        auto shifted = [&](double h) {
          Eigen::VectorXd q = par;
          q[c] += h;
          return g_of(y, q);
        };
        const double h = 1e-3;
        const Eigen::VectorXd d1 = (shifted(h) - shifted(-h)) / (2.0 * h);
        const Eigen::VectorXd d2 = (shifted(h / 2) - shifted(-h / 2)) / h;
        const Eigen::VectorXd col = (4.0 * d2 - d1) / 3.0;
        out.H.col(c) -= f * col;
      }
    }
  }
  return out;
}

}  // namespace oracle
