#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wscl/glm_margins.hpp"

using namespace wscl;

namespace {
const MarginFamily kFamilies[] = {MarginFamily::PoissonLog, MarginFamily::BernoulliLogit, MarginFamily::BernoulliProbit};
}

TEST(Margins, LogitMeanAndWeightsAtZero) {
  EXPECT_DOUBLE_EQ(mean(MarginFamily::BernoulliLogit, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(fisher_weight(MarginFamily::BernoulliLogit, 0.0), 0.25);
  EXPECT_DOUBLE_EQ(score(MarginFamily::BernoulliLogit, {0.0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(score(MarginFamily::BernoulliLogit, {0.0, 0}), -0.5);
}

TEST(Margins, PoissonLogPmf) {
  const double nu = std::log(3.0);
  EXPECT_NEAR(log_pmf(MarginFamily::PoissonLog, {nu, 2}), -std::log(2.0) - 3.0 + 2.0 * std::log(3.0), 1e-14);
  EXPECT_NEAR(score(MarginFamily::PoissonLog, {nu, 2}), -1.0, 1e-14);
  EXPECT_NEAR(fisher_weight(MarginFamily::PoissonLog, nu), 3.0, 1e-14);
}

TEST(Margins, ProbitWeightFormula) {
  const double nu = 0.7;
  const double mu = oracle::Phi(nu), ph = oracle::phi(nu);
  EXPECT_NEAR(fisher_weight(MarginFamily::BernoulliProbit, nu), ph * ph / (mu * (1 - mu)), 1e-15);
  EXPECT_NEAR(score(MarginFamily::BernoulliProbit, {nu, 1}), (1 - mu) * ph / (mu * (1 - mu)), 1e-14);
}

TEST(Margins, ScoreIsDerivativeOfLogPmf) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto fam : kFamilies) {
    for (int t = 0; t < 40; ++t) {
      const double nu = u(gen);
      const int y = is_binary(fam) ? t % 2 : t % 7;
      const double fd = oracle::derivative([&](double v) { return log_pmf(fam, {v, y}); }, nu);
      EXPECT_NEAR(score(fam, {nu, y}), fd, 1e-8) << family_name(fam) << ' ' << nu << ' ' << y;
    }
  }
}

TEST(Margins, WeightEqualsScoreVarianceAndExpectedCurvature) {
  for (auto fam : kFamilies) {
    for (double nu : {-2.0, -0.3, 0.0, 1.1, 2.5}) {
      const int top = support_max(fam, nu, 1e-15);
      double mean_s = 0.0, var_s = 0.0, curv = 0.0;
      for (int y = 0; y <= top; ++y) {
        const double f = pmf(fam, {nu, y});
        const double s = score(fam, {nu, y});
        mean_s += f * s;
        var_s += f * s * s;
        curv -= f * oracle::derivative([&](double v) { return score(fam, {v, y}); }, nu);
      }
      EXPECT_NEAR(mean_s, 0.0, 1e-10);
      EXPECT_NEAR(var_s, fisher_weight(fam, nu), 1e-8);
      EXPECT_NEAR(curv, fisher_weight(fam, nu), 1e-8);
    }
  }
}

TEST(Margins, CdfDerivativeMatchesFiniteDifference) {
  for (auto fam : kFamilies) {
    for (double nu : {-1.5, 0.2, 1.7}) {
      for (int y = -1; y <= (is_binary(fam) ? 1 : 8); ++y) {
        const double fd = oracle::derivative([&](double v) { return cdf(fam, y, v); }, nu);
        EXPECT_NEAR(cdf_dnu(fam, y, nu), fd, 1e-9);
        const double z = cutpoint(fam, y, nu);
        if (std::isfinite(z)) {
          const double fdz = oracle::derivative([&](double v) { return cutpoint(fam, y, v); }, nu, 1e-4);
          EXPECT_NEAR(cutpoint_dnu(fam, y, nu), fdz, 1e-7);
        }
      }
    }
  }
}

TEST(Margins, CutpointsBracketTheSupport) {
  EXPECT_EQ(cutpoint(MarginFamily::PoissonLog, -1, 0.0), -kInf);
  EXPECT_EQ(cutpoint(MarginFamily::BernoulliLogit, 1, 0.3), kInf);
  EXPECT_NEAR(cutpoint(MarginFamily::BernoulliLogit, 0, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(cutpoint(MarginFamily::BernoulliProbit, 0, 0.8), -0.8, 1e-12);
  const double z = cutpoint(MarginFamily::PoissonLog, 40, std::log(2.0));
  EXPECT_TRUE(std::isfinite(z));
  EXPECT_GT(z, 8.0);
}

TEST(Margins, PoissonTruncationPoint) {
  for (double nu : {-3.0, 0.0, std::log(5.0), std::log(40.0)}) {
    const int ys = support_max(MarginFamily::PoissonLog, nu, 1e-9);
    EXPECT_GE(cdf(MarginFamily::PoissonLog, ys, nu), 1.0 - 1e-9);
    EXPECT_LT(cdf(MarginFamily::PoissonLog, ys - 1, nu), 1.0 - 1e-9);
  }
  EXPECT_EQ(support_max(MarginFamily::BernoulliLogit, 5.0), 1);
  EXPECT_THROW(support_max(MarginFamily::PoissonLog, 0.0, 0.0), ConfigError);
}

TEST(Margins, ExtremePredictorsStayFinite) {
  for (auto fam : kFamilies) {
    for (double nu : {-50.0, 50.0}) {
      EXPECT_TRUE(std::isfinite(score(fam, {nu, 0})));
      EXPECT_TRUE(std::isfinite(log_pmf(fam, {nu, 1})));
      EXPECT_GE(fisher_weight(fam, nu), 0.0);
      EXPECT_TRUE(std::isfinite(fisher_weight(fam, nu)));
    }
  }
}

TEST(Margins, RejectsOutOfSupportResponses) {
  EXPECT_THROW(log_pmf(MarginFamily::BernoulliLogit, {0.0, 2}), ConfigError);
  EXPECT_THROW(score(MarginFamily::PoissonLog, {0.0, -1}), ConfigError);
  EXPECT_EQ(pmf(MarginFamily::BernoulliProbit, {0.0, 3}), 0.0);
  EXPECT_THROW(parse_family("gamma"), ConfigError);
  EXPECT_EQ(parse_family("binary"), MarginFamily::BernoulliLogit);
}
