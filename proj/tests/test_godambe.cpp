#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "godambe_oracle.hpp"
#include "wscl/godambe.hpp"

using namespace wscl;

namespace {

oracle::BruteForce brute(const LongitudinalDataset& data, const Eigen::VectorXd& beta, double theta,
                         const oracle::OneParameter& model) {
  std::vector<Eigen::MatrixXd> xs;
  std::vector<std::vector<int>> occ;
  for (const auto& c : data.clusters) {
    xs.push_back(c.X);
    occ.push_back(c.occasions);
  }
  return oracle::godambe_brute_force(xs, occ, beta, theta, model);
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

class GodambeExchangeable : public ::testing::TestWithParam<double> {};

TEST_P(GodambeExchangeable, MatchesEnumerationOverAllOutcomes) {
  const double rho = GetParam();
  const auto data = fixture::with_dropout(fixture::exch_panel(MarginFamily::BernoulliLogit, 9, 3, rho, 5));
  const Eigen::Vector3d beta(0.3, -0.5, 0.2);
  const auto g = godambe_matrices(data, beta, CorrelationModel(Structure::Exchangeable, 3, {rho}));
  const auto o = brute(data, beta, rho, oracle::exchangeable());
  EXPECT_LT(max_abs(g.H - o.H), 1e-6);
  EXPECT_LT(max_abs(g.J - o.J), 1e-6);
  EXPECT_EQ(max_abs(g.H.topRightCorner(3, 1)), 0.0);
}

INSTANTIATE_TEST_SUITE_P(Rho, GodambeExchangeable, ::testing::Values(0.2, 0.5));

TEST(Godambe, Ar1ChainRuleMatchesEnumeration) {
  auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 6, 3, 0.3, 2);
  // Keep two occasions per cluster with lags 1 and 2.
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    auto& c = data.clusters[i];
    const int drop = i % 2 ? 1 : 2;
    std::vector<int> keep;
    for (int j = 0; j < 3; ++j)
      if (j != drop) keep.push_back(j);
    Eigen::MatrixXd x(2, c.X.cols());
    std::vector<int> occ, y;
    for (int r = 0; r < 2; ++r) {
      x.row(r) = c.X.row(keep[r]);
      occ.push_back(c.occasions[keep[r]]);
      y.push_back(c.y[keep[r]]);
    }
    c.X = x;
    c.occasions = occ;
    c.y = y;
  }
  const Eigen::Vector3d beta(-0.2, 0.4, 0.1);
  const double rho = -0.45;
  const auto g = godambe_matrices(data, beta, CorrelationModel(Structure::AR1, 3, {rho}));
  const auto o = brute(data, beta, rho, oracle::ar1());
  EXPECT_LT(max_abs(g.H - o.H), 1e-6);
  EXPECT_LT(max_abs(g.J - o.J), 1e-6);
}

TEST(Godambe, OneParameterFormAgreesWithGeneralAssembly) {
  for (auto fam : {MarginFamily::BernoulliLogit, MarginFamily::BernoulliProbit, MarginFamily::PoissonLog}) {
    const auto data = fixture::with_dropout(fixture::exch_panel(fam, 20, 3, 0.4, 77));
    const Eigen::Vector3d beta(0.2, -0.3, 0.1);
    for (const auto& corr : {CorrelationModel(Structure::Exchangeable, 3, {0.35}), CorrelationModel(Structure::AR1, 3, {0.6})}) {
      const auto a = godambe_matrices(data, beta, corr);
      const auto b = one_parameter_godambe(data, beta, corr);
      EXPECT_LT(max_abs(a.H - b.H), 1e-10 * std::max(1.0, max_abs(a.H)));
      EXPECT_LT(max_abs(a.J - b.J), 1e-10 * std::max(1.0, max_abs(a.J)));
    }
  }
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 5, 3, 0.4);
  EXPECT_THROW(one_parameter_godambe(data, Eigen::Vector3d::Zero(), CorrelationModel::independence(3)), ConfigError);
}

TEST(Godambe, IndependentClustersGiveSymmetricJ) {
  const auto data = fixture::panel(MarginFamily::PoissonLog, 30, 3, unstructured_design_matrix(), 8);
  const Eigen::Vector3d beta(0.5, -0.2, -0.2);
  const auto g = godambe_matrices(data, beta, unstructured_design_matrix());
  EXPECT_LT(max_abs(g.J - g.J.transpose()), 1e-12 * max_abs(g.J));
  EXPECT_EQ(max_abs(g.H.topRightCorner(3, 3)), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.J);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Godambe, InvariantToClusterOrder) {
  auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 40, 3, 0.4, 3);
  const Eigen::Vector3d beta(0.1, 0.2, -0.3);
  const CorrelationModel corr(Structure::Exchangeable, 3, {0.4});
  const auto a = godambe_matrices(data, beta, corr);
  std::reverse(data.clusters.begin(), data.clusters.end());
  const auto b = godambe_matrices(data, beta, corr);
  EXPECT_LT(max_abs(a.H - b.H), 1e-12 * max_abs(a.H));
  EXPECT_LT(max_abs(a.J - b.J), 1e-12 * max_abs(a.J));
}

TEST(Godambe, RejectsUnconvergedFit) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 30, 3, 0.4);
  auto fit = fit_cl1(data, Structure::Exchangeable);
  fit.stage1_converged = false;
  EXPECT_THROW(godambe_matrices(data, fit), ConfigError);
}

TEST(Criteria, EqualSensitivityAndVariabilityCountParameters) {
  Eigen::MatrixXd h(4, 4);
  h << 5, 1, 0, 0, 1, 4, 0, 0, 0.5, 0.2, 3, 0.1, 0.3, 0.1, 0.1, 2;
  const auto c = cl1_criteria(-100.0, h, h, 50);
  EXPECT_NEAR(c.trace, 4.0, 1e-12);
  EXPECT_NEAR(c.aic, 208.0, 1e-10);
  EXPECT_NEAR(c.bic, 200.0 + std::log(50.0) * 4.0, 1e-10);
  const auto e = cl1_criteria(-100.0, h, h, std::exp(2.0));
  EXPECT_NEAR(e.aic, e.bic, 1e-10);
}

TEST(Criteria, TraceMatchesExplicitInverse) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 60, 3, 0.5, 41);
  const auto fit = fit_cl1(data, Structure::Exchangeable);
  const auto g = godambe_matrices(data, fit);
  const Eigen::MatrixXd hinv = g.H.inverse();
  EXPECT_NEAR(penalty_trace(g.H, g.J), (g.J * hinv).trace(), 1e-9);
  EXPECT_THROW(penalty_trace(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)), NumericalError);
  EXPECT_THROW(cl1_criteria(0.0, g.H, g.J, 0.0), ConfigError);
}

TEST(Selection, SingleCandidateWins) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 60, 3, 0.5, 2);
  const auto rep = select(data, {{"EX", Structure::Exchangeable, {}}});
  EXPECT_EQ(rep.winner_aic, "EX");
  EXPECT_EQ(rep.winner_bic, "EX");
  EXPECT_TRUE(rep.candidates.front().ok);
  EXPECT_EQ(rep.candidates.front().n_params, 4);
}

TEST(Selection, TiesPreferFewerParametersThenLabel) {
  std::vector<CandidateResult> rs(3);
  rs[0].label = "b";
  rs[0].n_params = 5;
  rs[1].label = "c";
  rs[1].n_params = 4;
  rs[2].label = "a";
  rs[2].n_params = 5;
  for (auto& r : rs) {
    r.ok = true;
    r.aic = 10.0;
    r.bic = 12.0;
  }
  EXPECT_EQ(detail::pick_winner(rs, &CandidateResult::aic), "c");
  rs[1].bic = 13.0;
  EXPECT_EQ(detail::pick_winner(rs, &CandidateResult::bic), "a");
  rs[2].ok = false;
  EXPECT_EQ(detail::pick_winner(rs, &CandidateResult::bic), "b");
}

TEST(Selection, DuplicateCandidatesTieOnLabel) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 60, 3, 0.5, 2);
  const auto rep = select(data, {{"second", Structure::AR1, {}}, {"first", Structure::AR1, {}}});
  EXPECT_EQ(rep.candidates[0].aic, rep.candidates[1].aic);
  EXPECT_EQ(rep.winner_aic, "first");
}

TEST(Selection, CovariateSubsetsUseTheirColumns) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 80, 3, 0.5, 6);
  const auto rep = select(data, {{"x1", Structure::Exchangeable, {0, 1}}, {"full", Structure::Exchangeable, {}}});
  EXPECT_EQ(rep.candidates[0].covariates, (std::vector<std::string>{"(Intercept)", "x1"}));
  EXPECT_EQ(rep.candidates[0].n_params, 3);
  EXPECT_EQ(rep.candidates[1].n_params, 4);
}

TEST(Selection, ErrorsAreReported) {
  const auto data = fixture::exch_panel(MarginFamily::BernoulliLogit, 30, 3, 0.5, 2);
  EXPECT_THROW(select(data, {}), ConfigError);
  auto flat = data;
  for (auto& c : flat.clusters) c.X.col(1) = c.X.col(0);
  EXPECT_THROW(select(flat, {{"EX", Structure::Exchangeable, {}}}), NumericalError);
  const auto rep = select(flat, {{"EX", Structure::Exchangeable, {}}, {"ok", Structure::Exchangeable, {0, 2}}});
  EXPECT_FALSE(rep.candidates[0].ok);
  EXPECT_FALSE(rep.candidates[0].error.empty());
  EXPECT_EQ(rep.winner_aic, "ok");
}
