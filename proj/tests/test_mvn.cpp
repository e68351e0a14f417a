#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wscl/glm_margins.hpp"
#include "wscl/mvn_integrals.hpp"

using namespace wscl;

namespace {

Rectangle make_rect(std::vector<double> lo, std::vector<double> hi, const Eigen::MatrixXd& r) {
  Rectangle rect;
  const auto d = static_cast<Eigen::Index>(lo.size());
  rect.lower.resize(d);
  rect.upper.resize(d);
  rect.corr = r;
  for (Eigen::Index j = 0; j < d; ++j) {
    rect.lower[j] = lo[j];
    rect.upper[j] = hi[j];
  }
  return rect;
}

Eigen::MatrixXd equi(int d, double rho) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(d, d, rho);
  r.diagonal().setOnes();
  return r;
}

}  // namespace

TEST(Mvn, BivariateRectangleMatchesQuadrature) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> z(-2.5, 2.5), r(-0.95, 0.95);
  for (int t = 0; t < 100; ++t) {
    double l1 = z(gen), u1 = z(gen), l2 = z(gen), u2 = z(gen);
    if (l1 > u1) std::swap(l1, u1);
    if (l2 > u2) std::swap(l2, u2);
    if (t % 5 == 0) l1 = -kInf;
    if (t % 7 == 0) u2 = kInf;
    const double rho = r(gen);
    EXPECT_NEAR(bvn_rectangle(l1, u1, l2, u2, rho), oracle::bvn_rect(l1, u1, l2, u2, rho), 1e-11);
  }
}

TEST(Mvn, BivariateOrthant) { EXPECT_NEAR(bvn_rectangle(-kInf, 0, -kInf, 0, 0.5), 1.0 / 3.0, 1e-15); }

TEST(Mvn, RhoDerivativeMatchesFiniteDifference) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> z(-2.0, 2.0), r(-0.9, 0.9);
  for (int t = 0; t < 100; ++t) {
    double l1 = z(gen), u1 = z(gen), l2 = z(gen), u2 = z(gen);
    if (l1 > u1) std::swap(l1, u1);
    if (l2 > u2) std::swap(l2, u2);
    if (t % 3 == 0) l2 = -kInf;
    const double rho = r(gen);
    const double fd = oracle::derivative([&](double v) { return bvn_rectangle(l1, u1, l2, u2, v); }, rho, 1e-3);
    EXPECT_NEAR(bvn_rectangle_drho(l1, u1, l2, u2, rho), fd, 1e-9);
  }
}

TEST(Mvn, MarginDerivativeMatchesFiniteDifference) {
  const Eigen::MatrixXd r = equi(2, -0.35);
  for (auto which : {Coordinate::First, Coordinate::Second}) {
    for (auto bound : {Bound::Lower, Bound::Upper}) {
      auto f = [&](double v) {
        auto rect = make_rect({-0.4, -1.0}, {0.9, 0.2}, r);
        const int a = which == Coordinate::First ? 0 : 1;
        (bound == Bound::Upper ? rect.upper[a] : rect.lower[a]) = v;
        return bvn_rectangle(rect);
      };
      const auto rect = make_rect({-0.4, -1.0}, {0.9, 0.2}, r);
      const int a = which == Coordinate::First ? 0 : 1;
      const double x = bound == Bound::Upper ? rect.upper[a] : rect.lower[a];
      EXPECT_NEAR(bvn_rectangle_dmargin(rect, which, bound), oracle::derivative(f, x), 1e-10);
    }
  }
  auto open = make_rect({-kInf, 0.0}, {0.5, 1.0}, r);
  EXPECT_THROW(bvn_rectangle_dmargin(open, Coordinate::First, Bound::Lower), ConfigError);
}

TEST(Mvn, ExchangeableReductionMatchesOracle) {
  const std::vector<double> lo{-0.5, -kInf, 0.1, -1.2};
  const std::vector<double> hi{0.8, 0.3, kInf, 0.4};
  for (double rho : {0.0, 0.2, 0.5, 0.9}) {
    const auto rect = make_rect(lo, hi, equi(4, rho));
    EXPECT_NEAR(mvn_rectangle_exchangeable(rect, rho), oracle::exch_rect(lo, hi, rho), 1e-12) << rho;
  }
  EXPECT_THROW(mvn_rectangle_exchangeable(make_rect(lo, hi, equi(4, -0.1)), -0.1), ConfigError);
}

TEST(Mvn, TrivariateOrthants) {
  const auto ex = make_rect({-kInf, -kInf, -kInf}, {0, 0, 0}, equi(3, 0.5));
  EXPECT_NEAR(mvn_rectangle(ex).value, 0.25, 1e-12);
  EXPECT_NEAR(mvn_rectangle_trivariate(ex), 0.25, 1e-10);
  Eigen::MatrixXd un(3, 3);
  un << 1, -0.5, -0.3, -0.5, 1, 0.3, -0.3, 0.3, 1;
  const auto r = make_rect({-kInf, -kInf, -kInf}, {0, 0, 0}, un);
  EXPECT_NEAR(mvn_rectangle_trivariate(r), oracle::orthant3(-0.5, -0.3, 0.3), 1e-10);
  EXPECT_NEAR(mvn_rectangle_general(r, 9).value, oracle::orthant3(-0.5, -0.3, 0.3), 5e-5);
}

TEST(Mvn, TrivariateConditioningMatchesLattice) {
  Eigen::MatrixXd r(3, 3);
  r << 1, 0.25, 0.0625, 0.25, 1, 0.25, 0.0625, 0.25, 1;
  const auto rect = make_rect({-0.3, -kInf, 0.2}, {1.1, 0.4, kInf}, r);
  const auto q = mvn_rectangle_general(rect, 4);
  EXPECT_TRUE(q.converged);
  EXPECT_NEAR(mvn_rectangle_trivariate(rect), q.value, 4 * q.error + 1e-7);
}

TEST(Mvn, LatticeAgreesWithExchangeableInFourDimensions) {
  const std::vector<double> lo{-0.5, -kInf, 0.1, -1.2};
  const std::vector<double> hi{0.8, 0.3, kInf, 0.4};
  const auto rect = make_rect(lo, hi, equi(4, 0.4));
  const auto q = mvn_rectangle_general(rect, 17);
  EXPECT_TRUE(q.converged);
  EXPECT_LE(q.error, 1e-5);
  EXPECT_NEAR(q.value, oracle::exch_rect(lo, hi, 0.4), std::max(4 * q.error, 1e-7));
}

TEST(Mvn, LatticeIsDeterministicForFixedSeed) {
  Eigen::MatrixXd r(4, 4);
  r << 1, 0.3, -0.2, 0.1, 0.3, 1, 0.25, 0.0, -0.2, 0.25, 1, 0.4, 0.1, 0.0, 0.4, 1;
  const auto rect = make_rect({-1, -1, -1, -1}, {1, 0.5, 2, kInf}, r);
  EXPECT_EQ(mvn_rectangle_general(rect, 3).value, mvn_rectangle_general(rect, 3).value);
}

TEST(Mvn, BinaryTablesSumToOne) {
  for (int d = 2; d <= 4; ++d) {
    for (int rule = 0; rule < 2; ++rule) {
      // rule 0: exchangeable reduction; rule 1: a non-equicorrelated matrix through QMC or conditioning.
      Eigen::MatrixXd r = equi(d, 0.5);
      if (rule == 1) {
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) r(a, b) = std::pow(0.5, std::abs(a - b));
      }
      MvnOptions opts;
      double total = 0.0;
      for (int cell = 0; cell < (1 << d); ++cell) {
        std::vector<double> lo(d), hi(d);
        for (int j = 0; j < d; ++j) {
          const double nu = 0.3 * j - 0.2;
          const double z = cutpoint(MarginFamily::BernoulliLogit, 0, nu);
          const bool one = (cell >> j) & 1;
          lo[j] = one ? z : -kInf;
          hi[j] = one ? kInf : z;
        }
        total += mvn_rectangle(make_rect(lo, hi, r), opts).value;
      }
      EXPECT_NEAR(total, 1.0, rule == 0 ? 1e-8 : 1e-4) << "d=" << d << " rule=" << rule;
    }
  }
}

TEST(MvnTables, TrivariateTableMatchesCellwiseConditioning) {
  const std::array<std::vector<double>, 3> bounds{std::vector<double>{-INFINITY, -0.4, 0.7, INFINITY},
                                                  std::vector<double>{-INFINITY, 0.2, INFINITY},
                                                  std::vector<double>{-INFINITY, -1.1, 0.0, 1.3, INFINITY}};
  SmallMatrix r(3, 3);
  r << 1, -0.5, -0.3, -0.5, 1, 0.3, -0.3, 0.3, 1;
  const auto table = trivariate_table(bounds, r);
  ASSERT_EQ(table.size(), 24u);
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 4; ++c) {
        Rectangle rect{SmallVector(3), SmallVector(3), r};
        rect.lower << bounds[0][a], bounds[1][b], bounds[2][c];
        rect.upper << bounds[0][a + 1], bounds[1][b + 1], bounds[2][c + 1];
        const double v = table[(a * 2 + b) * 4 + c];
        EXPECT_NEAR(v, mvn_rectangle_trivariate(rect), 1e-12);
        total += v;
      }
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-13);
  // Marginalizing the last coordinate gives the bivariate rectangle.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 2; ++b) {
      double m = 0.0;
      for (int c = 0; c < 4; ++c) m += table[(a * 2 + b) * 4 + c];
      EXPECT_NEAR(m, bvn_rectangle(bounds[0][a], bounds[0][a + 1], bounds[1][b], bounds[1][b + 1], -0.5), 1e-13);
    }
  }
}

TEST(MvnTables, ExchangeableTableMatchesOracle) {
  const std::vector<std::vector<double>> bounds{{-INFINITY, 0.1, INFINITY},
                                                {-INFINITY, -0.6, 0.9, INFINITY},
                                                {-INFINITY, 0.3, INFINITY},
                                                {-INFINITY, -0.2, INFINITY}};
  for (double rho : {0.2, 0.5, 0.9}) {
    const auto table = exchangeable_table(bounds, rho);
    ASSERT_EQ(table.size(), 24u);
    double total = 0.0;
    for (int c = 0; c < 24; ++c) {
      const int k[4] = {c / 12, (c / 4) % 3, (c / 2) % 2, c % 2};
      std::vector<double> lo(4), hi(4);
      for (int j = 0; j < 4; ++j) {
        lo[j] = bounds[j][k[j]];
        hi[j] = bounds[j][k[j] + 1];
      }
      EXPECT_NEAR(table[c], oracle::exch_rect(lo, hi, rho), 1e-11) << rho << " " << c;
      total += table[c];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_THROW(exchangeable_table(bounds, -0.1), ConfigError);
}

TEST(MvnTables, UpperTailRectanglesKeepRelativePrecision) {
  for (double rho : {0.3, 0.8}) {
    const double exact = oracle::bvn_rect(5.0, 5.5, 4.5, INFINITY, rho);
    EXPECT_NEAR(bvn_rectangle(5.0, 5.5, 4.5, INFINITY, rho) / exact, 1.0, 1e-8) << rho;
  }
  // Far below the absolute accuracy of the cdf, but a positive value of the right size.
  const double tiny = oracle::bvn_rect(5.0, 5.5, 4.5, INFINITY, -0.5);
  EXPECT_NEAR(bvn_rectangle(5.0, 5.5, 4.5, INFINITY, -0.5) / tiny, 1.0, 1e-2);
}

TEST(MvnTables, SmallBoundedCellsStayConsistentWithTheirDerivative) {
  const double l1 = 2.15131, u1 = 2.76264, l2 = 2.50987, u2 = 3.06117;
  for (double rho : {-0.71, -0.3, 0.4}) {
    const double exact = oracle::bvn_rect(l1, u1, l2, u2, rho);
    EXPECT_NEAR(bvn_rectangle(l1, u1, l2, u2, rho) / exact, 1.0, 1e-8) << rho;
    auto f = [&](double r) { return bvn_rectangle(l1, u1, l2, u2, r); };
    const double fd = oracle::derivative(f, rho, 1e-4);
    EXPECT_NEAR(bvn_rectangle_drho(l1, u1, l2, u2, rho) / fd, 1.0, 1e-7) << rho;
  }
}
