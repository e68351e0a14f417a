#pragma once
// Enumerated supports of one margin: cutpoints, cdf derivatives and scores per outcome.

#include <vector>

#include "wscl/cl1.hpp"
#include "wscl/glm_margins.hpp"

namespace wscl {

struct MarginTable {
  int kmax = 1;               // outcomes 0..kmax
  std::vector<MarginCut> cut; // per outcome
  std::vector<double> s1;     // univariate score per outcome

  int size() const { return kmax + 1; }
};

inline MarginTable margin_table(MarginFamily family, double nu, double tail) {
  MarginTable t;
  t.kmax = support_max(family, nu, tail);
  t.cut.resize(t.kmax + 1);
  t.s1.resize(t.kmax + 1);
  double z_prev = -kInf;
  double d_prev = 0.0;
  for (int y = 0; y <= t.kmax; ++y) {
    const double z = cutpoint(family, y, nu);
    const double dz = cdf_dnu(family, y, nu);
    // The last outcome absorbs the upper tail so every table carries total mass one.
    t.cut[y] = y == t.kmax ? MarginCut{z_prev, kInf, d_prev, 0.0} : MarginCut{z_prev, z, d_prev, dz};
    t.s1[y] = score(family, {nu, y});
    z_prev = z;
    d_prev = dz;
  }
  return t;
}

}  // namespace wscl
