#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wscl/normal.hpp"

using namespace wscl;

TEST(Normal, CdfMatchesErfc) {
  for (double x = -8.0; x <= 8.0; x += 0.25) EXPECT_NEAR(norm_cdf(x), oracle::Phi(x), 1e-15);
}

TEST(Normal, QuantileInvertsCdf) {
  for (double p : {1e-300, 1e-20, 1e-8, 0.001, 0.1, 0.3, 0.5, 0.77, 0.999}) {
    EXPECT_NEAR(norm_cdf(norm_quantile(p)) / p, 1.0, 1e-12) << p;
  }
  for (double q : {1e-300, 1e-15, 1e-6, 0.2}) {
    EXPECT_NEAR(norm_cdf(-norm_quantile_upper(q)) / q, 1.0, 1e-12) << q;
  }
  EXPECT_EQ(norm_quantile(0.0), -kInf);
  EXPECT_EQ(norm_quantile(1.0), kInf);
}

TEST(Normal, BivariateCdfMatchesQuadrature) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> z(-3.0, 3.0), r(-0.98, 0.98);
  for (int t = 0; t < 200; ++t) {
    const double a = z(gen), b = z(gen), rho = r(gen);
    EXPECT_NEAR(bvn_cdf(a, b, rho), oracle::bvn_rect(-kInf, a, -kInf, b, rho), 1e-12) << a << ' ' << b << ' ' << rho;
  }
}

TEST(Normal, BivariateCdfLimits) {
  EXPECT_DOUBLE_EQ(bvn_cdf(kInf, 0.3, 0.4), norm_cdf(0.3));
  EXPECT_DOUBLE_EQ(bvn_cdf(-0.2, kInf, 0.4), norm_cdf(-0.2));
  EXPECT_EQ(bvn_cdf(-kInf, 1.0, 0.4), 0.0);
  EXPECT_NEAR(bvn_cdf(0.0, 0.0, 0.5), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(bvn_cdf(0.0, 0.0, 0.0), 0.25, 1e-15);
  EXPECT_NEAR(bvn_cdf(0.7, -0.4, 0.0), norm_cdf(0.7) * norm_cdf(-0.4), 1e-15);
}

TEST(Normal, BivariateDensityIntegratesToCdfDerivative) {
  const double a = 0.3, b = -0.6, rho = 0.45;
  const double d2 = oracle::derivative([&](double x) { return oracle::derivative([&](double y) { return bvn_cdf(x, y, rho); }, b); }, a);
  EXPECT_NEAR(bvn_pdf(a, b, rho), d2, 1e-7);
}
