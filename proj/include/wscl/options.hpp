#pragma once

#include <cstddef>

#include "wscl/mvn_integrals.hpp"
#include "wscl/parallel.hpp"

namespace wscl {

struct EstimationOptions {
  // Stage 1: independent estimating equations (tolerance on max |g1| / #observations).
  int stage1_max_iter = 100;
  double stage1_tol = 1e-8;

  // Stage 2: bivariate composite likelihood (tolerance on the reparameterized gradient).
  int stage2_max_iter = 200;
  double stage2_tol = 1e-6;
  double rho_init = 0.1;

  // Weighted scores.
  int ws_max_iter = 100;
  double ws_tol = 1e-8;
  bool refresh_weights = true;  // false: weights frozen at the CL1 estimates

  // Expectations over Poisson supports stop at F1(y*) >= 1 - poisson_tail.
  double poisson_tail = 1e-9;
  // Outcome-table cells above which a cost warning is recorded.
  std::size_t cell_budget = 200000;

  MvnOptions mvn;
  int workers = worker_count();
};

}  // namespace wscl
