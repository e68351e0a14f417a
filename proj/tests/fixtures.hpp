#pragma once
// Small simulated panels shared by the test suites.

#include <string>
#include <vector>

#include "wscl/simulation.hpp"

namespace fixture {

inline wscl::SimDesign design(wscl::MarginFamily family, int n, int d, wscl::CorrelationModel corr,
                              std::uint64_t seed = 1) {
  wscl::SimDesign s;
  s.n = n;
  s.d = d;
  s.family = family;
  s.covariates = {{"(Intercept)", wscl::CovariateKind::Intercept},
                  {"x1", wscl::CovariateKind::Bernoulli, 0.5},
                  {"time", wscl::CovariateKind::Time}};
  s.beta_true = Eigen::Vector3d(family == wscl::MarginFamily::PoissonLog ? 0.5 : 0.25, -0.25, -0.25);
  s.corr_true = std::move(corr);
  s.B = 1;
  s.seed = seed;
  return s;
}

inline wscl::LongitudinalDataset panel(wscl::MarginFamily family, int n, int d, wscl::CorrelationModel corr,
                                       std::uint64_t seed = 1, int replicate = 0) {
  return wscl::simulate_dataset(design(family, n, d, std::move(corr), seed), replicate);
}

inline wscl::LongitudinalDataset exch_panel(wscl::MarginFamily family, int n, int d, double rho, std::uint64_t seed = 1) {
  return panel(family, n, d, wscl::CorrelationModel(wscl::Structure::Exchangeable, d, {rho}), seed);
}

/// Drops observations so cluster sizes vary between 1 and d.
inline wscl::LongitudinalDataset with_dropout(wscl::LongitudinalDataset data) {
  for (std::size_t i = 0; i < data.clusters.size(); ++i) {
    auto& c = data.clusters[i];
    const int keep = 1 + static_cast<int>(i % static_cast<std::size_t>(c.size()));
    c.occasions.resize(keep);
    c.y.resize(keep);
    c.X.conservativeResize(keep, Eigen::NoChange);
  }
  return data;
}

}  // namespace fixture
