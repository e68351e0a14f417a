// Fit a binary panel under several working correlation structures and report
// which one the CL1 criteria prefer.
//
//   structure_choice [panel.csv]

#include <iomanip>
#include <iostream>

#include "wscl.hpp"

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : WSCL_SAMPLE_PANEL;
  try {
    wscl::InputSchema schema;
    schema.family = wscl::MarginFamily::BernoulliLogit;
    const auto data = wscl::parse_input(path, schema);

    const auto cl1 = wscl::fit_cl1(data, wscl::Structure::Exchangeable);
    const auto ws = wscl::solve_weighted_scores(data, cl1);
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "exchangeable fit, rho = " << cl1.corr.params()[0] << '\n';
    for (std::size_t k = 0; k < data.covariate_names.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      std::cout << "  " << std::setw(12) << data.covariate_names[k] << std::setw(10) << ws.beta_hat[i] << "  se "
                << ws.se[i] << '\n';
    }

    const auto cands = wscl::structure_candidates({wscl::Structure::Independence, wscl::Structure::Exchangeable,
                                                   wscl::Structure::AR1, wscl::Structure::Unstructured});
    wscl::print_selection(std::cout, wscl::select(data, cands));
  } catch (const std::exception& e) {
    std::cerr << "structure_choice: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
