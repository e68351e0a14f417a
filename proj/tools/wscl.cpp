// wscl: weighted scores fits, CL1 criteria selection and selection-frequency studies.
//
//   wscl fit      --data panel.csv --family logit --structure exch
//   wscl select   --data panel.csv --family logit --structures ind,exch,ar1,unstr
//   wscl select   --data panel.csv --family logit --structure exch --subset small=x1 --subset full=x1,time
//   wscl simulate --design table3-ex --B 200 --seed 1
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wscl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string data;
  std::string family = "logit";
  bool no_intercept = false;
  std::string json_path;
  double stage1_tol = 1e-8;
  double stage2_tol = 1e-6;
  double ws_tol = 1e-8;
  double poisson_tail = 1e-9;
  int qmc_points = 4096;
  std::uint64_t seed = 20240611;
  bool frozen_weights = false;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

wscl::EstimationOptions options_from(const Common& c) {
  if (!(c.stage1_tol > 0 && c.stage2_tol > 0 && c.ws_tol > 0)) throw wscl::ConfigError("tolerances must be positive");
  if (!(c.poisson_tail > 0 && c.poisson_tail < 1)) throw wscl::ConfigError("--poisson-tail must lie in (0, 1)");
  if (c.qmc_points < 16) throw wscl::ConfigError("--qmc-points must be at least 16");
  wscl::EstimationOptions o;
  o.stage1_tol = c.stage1_tol;
  o.stage2_tol = c.stage2_tol;
  o.ws_tol = c.ws_tol;
  o.poisson_tail = c.poisson_tail;
  o.refresh_weights = !c.frozen_weights;
  o.mvn.qmc.points = c.qmc_points;
  o.mvn.seed = c.seed;
  return o;
}

void add_common(CLI::App* app, Common& c, bool with_data) {
  if (with_data) {
    app->add_option("--data", c.data, "role-tagged CSV input")->required();
    app->add_option("--family", c.family, "poisson, logit or probit");
    app->add_flag("--no-intercept", c.no_intercept, "do not add an intercept column");
  }
  app->add_option("--json", c.json_path, "write JSON-lines records here ('-': stdout, replacing the text report)");
  app->add_option("--stage1-tol", c.stage1_tol, "independence equations tolerance");
  app->add_option("--stage2-tol", c.stage2_tol, "pairwise likelihood gradient tolerance");
  app->add_option("--ws-tol", c.ws_tol, "weighted scores tolerance");
  app->add_option("--poisson-tail", c.poisson_tail, "Poisson support truncation tail mass");
  app->add_option("--qmc-points", c.qmc_points, "lattice points per randomization");
  app->add_option("--seed", c.seed, "seed for simulation and quasi-Monte Carlo shifts");
  app->add_flag("--frozen-weights", c.frozen_weights, "hold working weights at the CL1 estimates");
}

void emit_records(const std::string& path, const std::vector<nlohmann::json>& recs) {
  if (path.empty()) return;
  if (path == "-") {
    wscl::write_records(std::cout, recs);
    return;
  }
  std::ofstream out(path);
  if (!out) throw wscl::ConfigError("cannot write '" + path + "'");
  wscl::write_records(out, recs);
}

wscl::LongitudinalDataset load(const Common& c) {
  wscl::InputSchema schema;
  schema.family = wscl::parse_family(c.family);
  schema.intercept = !c.no_intercept;
  return wscl::parse_input(c.data, schema);
}

std::vector<int> columns_for(const wscl::LongitudinalDataset& data, const std::vector<std::string>& names) {
  std::vector<int> cols;
  if (data.intercept) cols.push_back(0);
  for (const auto& n : names) {
    const int c = data.column_of(n);
    if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

int cmd_fit(const Common& c, const std::string& structure, const std::string& covariates) {
  const auto opts = options_from(c);
  auto data = load(c);
  if (!covariates.empty()) data = data.select_columns(columns_for(data, split_list(covariates)));
  wscl::FitReport r;
  r.family = data.family;
  r.covariates = data.covariate_names;
  r.n = data.n();
  r.observations = data.total_observations();
  r.cl1 = wscl::fit_cl1(data, wscl::parse_structure(structure), opts);
  r.ws = wscl::solve_weighted_scores(data, r.cl1, opts);
  if (c.json_path != "-") wscl::print_fit(std::cout, r);
  emit_records(c.json_path, wscl::fit_records(r));
  return kExitOk;
}

int cmd_select(const Common& c, const std::string& structures, const std::string& structure,
               const std::vector<std::string>& subsets) {
  const auto opts = options_from(c);
  const auto data = load(c);
  std::vector<wscl::Candidate> cands;
  if (!subsets.empty()) {
    const auto s = wscl::parse_structure(structure);
    for (const auto& spec : subsets) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw wscl::ConfigError("--subset expects label=name,name,...");
      cands.push_back({spec.substr(0, eq), s, columns_for(data, split_list(spec.substr(eq + 1)))});
    }
  } else {
    std::vector<wscl::Structure> list;
    for (const auto& name : split_list(structures)) list.push_back(wscl::parse_structure(name));
    cands = wscl::structure_candidates(list);
  }
  const auto rep = wscl::select(data, cands, opts);
  if (c.json_path != "-") wscl::print_selection(std::cout, rep);
  emit_records(c.json_path, wscl::selection_records(rep));
  return kExitOk;
}

struct SimArgs {
  std::string design = "table3-ex";
  int B = 200;
  std::optional<int> n;
  std::string study;
  std::string structures = "ind,exch,ar1,unstr";
  std::string out;
  std::string write_data;
  int replicate = 0;
  // Explicit designs.
  int d = 3;
  std::string true_structure = "exch";
  std::string rho = "0.5";
  std::string beta = "0.25,-0.25,-0.25";
  std::string covariates = "x1:bernoulli,time:time";
};

wscl::SimDesign build_design(const Common& c, const SimArgs& a) {
  if (a.B < 1) throw wscl::ConfigError("--B must be at least 1");
  wscl::SimDesign design;
  if (a.design == "custom") {
    design.name = "custom";
    design.B = a.B;
    design.seed = c.seed;
    design.d = a.d;
    design.family = wscl::parse_family(c.family);
    design.covariates.push_back({"(Intercept)", wscl::CovariateKind::Intercept});
    for (const auto& item : split_list(a.covariates)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw wscl::ConfigError("--covariates expects name:kind entries");
      const auto kind = item.substr(colon + 1);
      wscl::CovariateGen g{item.substr(0, colon)};
      if (kind == "bernoulli") {
        g.kind = wscl::CovariateKind::Bernoulli;
      } else if (kind == "time") {
        g.kind = wscl::CovariateKind::Time;
      } else if (kind == "uniform") {
        g.kind = wscl::CovariateKind::Uniform;
        g.param = 1.0;
      } else {
        throw wscl::ConfigError("unknown covariate kind '" + kind + "' (bernoulli, time or uniform)");
      }
      design.covariates.push_back(g);
    }
    const auto b = split_list(a.beta);
    design.beta_true.resize(static_cast<Eigen::Index>(b.size()));
    for (std::size_t k = 0; k < b.size(); ++k) design.beta_true[static_cast<Eigen::Index>(k)] = std::stod(b[k]);
    std::vector<double> params;
    for (const auto& v : split_list(a.rho)) params.push_back(std::stod(v));
    const auto s = wscl::parse_structure(a.true_structure);
    if (s == wscl::Structure::Independence) params.clear();
    design.corr_true = wscl::CorrelationModel(s, design.d, params);
  } else {
    design = wscl::named_design(a.design, a.B, c.seed);
  }
  if (a.n) design.n = *a.n;
  design.validate();
  return design;
}

int cmd_simulate(const Common& c, const SimArgs& a) {
  const auto opts = options_from(c);
  const auto design = build_design(c, a);
  if (!a.write_data.empty()) {
    if (a.replicate < 0 || a.replicate >= design.B) throw wscl::ConfigError("--replicate must lie in [0, B)");
    wscl::write_dataset(a.write_data, wscl::simulate_dataset(design, a.replicate));
    std::cout << "wrote replicate " << a.replicate << " of " << design.name << " to " << a.write_data << '\n';
    return kExitOk;
  }
  std::string study = a.study;
  if (study.empty()) study = a.design.starts_with("table4-") ? "variable" : "structure";
  wscl::FrequencyTable table;
  if (study == "structure") {
    std::vector<wscl::Structure> list;
    for (const auto& name : split_list(a.structures)) list.push_back(wscl::parse_structure(name));
    table = wscl::run_structure_study(design, list, opts);
  } else if (study == "variable") {
    if (design.covariates.size() != 5) throw wscl::ConfigError("the variable study needs the five-column design");
    table = wscl::run_variable_study(design, wscl::table4_subsets(design.corr_true.structure()), opts);
  } else {
    throw wscl::ConfigError("--study must be structure or variable");
  }
  if (c.json_path != "-") wscl::write_frequency_table(std::cout, table);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw wscl::ConfigError("cannot write '" + a.out + "'");
    wscl::write_frequency_table(out, table);
  }
  emit_records(c.json_path, {wscl::frequency_record(table)});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted scores estimation and CL1 model selection for longitudinal binary and count data"};
  app.require_subcommand(1);

  Common fit_c, sel_c, sim_c;
  std::string fit_structure = "exch", fit_covariates;
  auto* fit = app.add_subcommand("fit", "CL1 then weighted scores estimates with robust standard errors");
  add_common(fit, fit_c, true);
  fit->add_option("--structure", fit_structure, "ind, exch, ar1 or unstr");
  fit->add_option("--covariates", fit_covariates, "comma-separated subset of covariate names");

  std::string sel_structures = "ind,exch,ar1,unstr", sel_structure = "exch";
  std::vector<std::string> sel_subsets;
  auto* sel = app.add_subcommand("select", "rank candidates by CL1AIC and CL1BIC");
  add_common(sel, sel_c, true);
  sel->add_option("--structures", sel_structures, "candidate structures (structure selection)");
  sel->add_option("--structure", sel_structure, "structure held fixed during covariate selection");
  sel->add_option("--subset", sel_subsets, "covariate candidate as label=name,name (repeatable)");

  SimArgs sim_a;
  auto* sim = app.add_subcommand("simulate", "selection-frequency study on a simulation design");
  add_common(sim, sim_c, false);
  sim_c.seed = 1;
  sim->add_option("--design", sim_a.design, "table3-ex|ar1|un, table4-ex|ar1|un, or custom");
  sim->add_option("--B", sim_a.B, "replicates");
  sim->add_option("--n", sim_a.n, "clusters per replicate (overrides the design)");
  sim->add_option("--study", sim_a.study, "structure or variable (default from the design)");
  sim->add_option("--structures", sim_a.structures, "candidate structures for a structure study");
  sim->add_option("--out", sim_a.out, "also write the frequency table here");
  sim->add_option("--write-data", sim_a.write_data, "write one simulated replicate as CSV instead of running a study");
  sim->add_option("--replicate", sim_a.replicate, "replicate index for --write-data");
  sim->add_option("--family", sim_c.family, "custom design: poisson, logit or probit");
  sim->add_option("--d", sim_a.d, "custom design: occasions per cluster");
  sim->add_option("--true-structure", sim_a.true_structure, "custom design: generating structure");
  sim->add_option("--rho", sim_a.rho, "custom design: generating correlation parameters");
  sim->add_option("--beta", sim_a.beta, "custom design: coefficients, intercept first");
  sim->add_option("--covariates", sim_a.covariates, "custom design: name:kind list (bernoulli, time, uniform)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*fit) return cmd_fit(fit_c, fit_structure, fit_covariates);
    if (*sel) return cmd_select(sel_c, sel_structures, sel_structure, sel_subsets);
    if (*sim) return cmd_simulate(sim_c, sim_a);
  } catch (const wscl::ParseError& e) {
    std::cerr << "wscl: input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const wscl::ConfigError& e) {
    std::cerr << "wscl: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const wscl::NumericalError& e) {
    std::cerr << "wscl: numerical failure: " << e.what() << '\n';
    if (!e.last_iterate().empty()) {
      std::cerr << "  last iterate:";
      for (double v : e.last_iterate()) std::cerr << ' ' << v;
      std::cerr << '\n';
    }
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "wscl: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "wscl: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
