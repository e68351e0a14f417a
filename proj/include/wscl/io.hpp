#pragma once
// Role-tagged delimited input, dataset output, and report emission as aligned
// text tables and line-delimited JSON records.
//
// Input header cells are `name:role` with role one of cluster, occasion,
// response, covariate, e.g.
//
//   id:cluster,visit:occasion,y:response,age:covariate,dose:covariate

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"

#include "wscl/cl1.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/godambe.hpp"
#include "wscl/simulation.hpp"
#include "wscl/weighted_scores.hpp"

namespace wscl {

struct InputSchema {
  MarginFamily family = MarginFamily::BernoulliLogit;
  bool intercept = true;
  char delimiter = ',';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_real(std::string_view s, std::size_t row, std::string_view column) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ParseError("column '" + std::string(column) + "': '" + std::string(s) + "' is not a finite number", row);
  }
  return v;
}

inline long long parse_integer(std::string_view s, std::size_t row, std::string_view column) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) {
    throw ParseError("column '" + std::string(column) + "': '" + std::string(s) + "' is not an integer", row);
  }
  return v;
}

/// Shortest representation that reads back to the same double.
inline std::string exact(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline LongitudinalDataset parse_input(std::istream& in, const InputSchema& schema) {
  std::string line;
  std::size_t row = 0;
  std::vector<std::string_view> cells;
  while (std::getline(in, line)) {
    ++row;
    if (!detail::trim(line).empty() && detail::trim(line).front() != '#') break;
  }
  if (detail::trim(line).empty()) throw ParseError("input has no header line", row);

  const std::string header = line;
  int col_cluster = -1, col_occasion = -1, col_response = -1;
  std::vector<int> col_cov;
  std::vector<std::string> names;
  const auto head = detail::split(header, schema.delimiter);
  for (std::size_t c = 0; c < head.size(); ++c) {
    const auto colon = head[c].rfind(':');
    if (colon == std::string_view::npos) {
      throw ParseError("header cell '" + std::string(head[c]) + "' lacks a ':role' tag", row);
    }
    const auto name = detail::trim(head[c].substr(0, colon));
    const auto role = detail::trim(head[c].substr(colon + 1));
    if (name.empty()) throw ParseError("header cell " + std::to_string(c + 1) + " has an empty name", row);
    names.emplace_back(name);
    auto take = [&](int& slot) {
      if (slot >= 0) throw ParseError("header declares more than one " + std::string(role) + " column", row);
      slot = static_cast<int>(c);
    };
    if (role == "cluster") {
      take(col_cluster);
    } else if (role == "occasion") {
      take(col_occasion);
    } else if (role == "response") {
      take(col_response);
    } else if (role == "covariate") {
      col_cov.push_back(static_cast<int>(c));
    } else {
      throw ParseError("unknown column role '" + std::string(role) + "'", row);
    }
  }
  if (col_cluster < 0 || col_occasion < 0 || col_response < 0) {
    throw ParseError("header must declare cluster, occasion and response columns", row);
  }

  LongitudinalDataset data;
  data.family = schema.family;
  data.intercept = schema.intercept;
  if (schema.intercept) data.covariate_names.emplace_back("(Intercept)");
  for (int c : col_cov) data.covariate_names.push_back(names[c]);
  const int offset = schema.intercept ? 1 : 0;
  const auto p = static_cast<Eigen::Index>(data.covariate_names.size());

  struct Obs {
    int occasion;
    int y;
    std::vector<double> x;
    std::size_t row;
  };
  std::map<std::string, std::size_t> index_of;
  std::vector<std::string> ids;
  std::vector<std::vector<Obs>> groups;
  while (std::getline(in, line)) {
    ++row;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    cells = detail::split(line, schema.delimiter);
    if (cells.size() != head.size()) {
      throw ParseError("expected " + std::to_string(head.size()) + " fields, found " + std::to_string(cells.size()), row);
    }
    const std::string id(cells[col_cluster]);
    if (id.empty()) throw ParseError("empty cluster identifier", row);
    const long long occ = detail::parse_integer(cells[col_occasion], row, names[col_occasion]);
    if (occ < 1 || occ > 1000000) throw ParseError("occasion index must be a positive integer", row);
    const long long y = detail::parse_integer(cells[col_response], row, names[col_response]);
    if (y < 0 || y > 1000000000 || !in_support(schema.family, static_cast<int>(y))) {
      throw ParseError("response " + std::string(cells[col_response]) + " is outside the " +
                           std::string(family_name(schema.family)) + " support",
                       row);
    }
    Obs obs{static_cast<int>(occ), static_cast<int>(y), std::vector<double>(p, 1.0), row};
    for (std::size_t m = 0; m < col_cov.size(); ++m) {
      obs.x[m + offset] = detail::parse_real(cells[col_cov[m]], row, names[col_cov[m]]);
    }
    auto [it, fresh] = index_of.emplace(id, groups.size());
    if (fresh) {
      ids.push_back(id);
      groups.emplace_back();
    }
    auto& g = groups[it->second];
    for (const auto& o : g) {
      if (o.occasion == obs.occasion) {
        throw ParseError("duplicate occasion " + std::to_string(occ) + " for cluster '" + id + "' (first on line " +
                             std::to_string(o.row) + ")",
                         row);
      }
    }
    g.push_back(std::move(obs));
  }
  if (groups.empty()) throw ParseError("input has no data rows", row);

  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& g = groups[i];
    std::sort(g.begin(), g.end(), [](const Obs& a, const Obs& b) { return a.occasion < b.occasion; });
    Cluster c;
    c.id = ids[i];
    c.X.resize(static_cast<Eigen::Index>(g.size()), p);
    for (std::size_t j = 0; j < g.size(); ++j) {
      c.occasions.push_back(g[j].occasion);
      c.y.push_back(g[j].y);
      for (Eigen::Index m = 0; m < p; ++m) c.X(static_cast<Eigen::Index>(j), m) = g[j].x[m];
    }
    data.clusters.push_back(std::move(c));
  }
  data.validate();
  return data;
}

inline LongitudinalDataset parse_input(const std::string& path, const InputSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file '" + path + "'", 0);
  return parse_input(in, schema);
}

/// Writes the dataset in the role-tagged format; the intercept column is implied.
inline void write_dataset(std::ostream& out, const LongitudinalDataset& data, char delimiter = ',') {
  const int first = data.intercept ? 1 : 0;
  out << "id:cluster" << delimiter << "occasion:occasion" << delimiter << "y:response";
  for (int m = first; m < data.p(); ++m) out << delimiter << data.covariate_names[m] << ":covariate";
  out << '\n';
  for (const auto& c : data.clusters) {
    for (int j = 0; j < c.size(); ++j) {
      out << c.id << delimiter << c.occasions[j] << delimiter << c.y[j];
      for (int m = first; m < data.p(); ++m) out << delimiter << detail::exact(c.X(j, m));
      out << '\n';
    }
  }
}

inline void write_dataset(const std::string& path, const LongitudinalDataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_dataset(out, data);
}

// ---------------------------------------------------------------------------
// Reports

struct FitReport {
  MarginFamily family = MarginFamily::BernoulliLogit;
  std::vector<std::string> covariates;
  int n = 0;
  int observations = 0;
  Cl1Fit cl1;
  WeightedScoresFit ws;
};

inline std::string pair_label(int j, int k) { return std::to_string(j) + "-" + std::to_string(k); }

/// Labels of the structure parameters in storage order.
inline std::vector<std::string> correlation_labels(const CorrelationModel& corr) {
  std::vector<std::string> out;
  switch (corr.structure()) {
    case Structure::Independence: break;
    case Structure::Exchangeable:
    case Structure::AR1: out.emplace_back("rho"); break;
    case Structure::Unstructured:
      for (int j = 1; j <= corr.d_max(); ++j) {
        for (int k = j + 1; k <= corr.d_max(); ++k) out.push_back("rho" + pair_label(j, k));
      }
      break;
  }
  return out;
}

inline void print_fit(std::ostream& out, const FitReport& r) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(6);
  out << "family: " << family_name(r.family) << "   structure: " << structure_name(r.cl1.corr.structure())
      << "   clusters: " << r.n << "   observations: " << r.observations << "\n\n";
  out << std::left << std::setw(16) << "coefficient" << std::right << std::setw(14) << "CL1" << std::setw(14) << "Est."
      << std::setw(14) << "SE" << std::setw(10) << "z" << '\n';
  for (std::size_t m = 0; m < r.covariates.size(); ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    out << std::left << std::setw(16) << r.covariates[m] << std::right << std::setw(14) << r.cl1.beta[i] << std::setw(14)
        << r.ws.beta_hat[i] << std::setw(14) << r.ws.se[i] << std::setw(10) << r.ws.beta_hat[i] / r.ws.se[i] << '\n';
  }
  const auto labels = correlation_labels(r.cl1.corr);
  if (!labels.empty()) {
    out << '\n' << std::left << std::setw(16) << "correlation" << std::right << std::setw(14) << "CL1" << '\n';
    for (std::size_t k = 0; k < labels.size(); ++k) {
      out << std::left << std::setw(16) << labels[k] << std::right << std::setw(14) << r.cl1.corr.params()[k] << '\n';
    }
  }
  out << "\nL1 = " << r.cl1.L1 << "   L2 = " << r.cl1.L2 << '\n';
  out << "stage 1: " << r.cl1.stage1_iterations << " iterations, scaled score " << r.cl1.stage1_score_norm << '\n';
  out << "stage 2: " << r.cl1.stage2_iterations << " iterations, gradient " << r.cl1.stage2_gradient_norm
      << (r.cl1.boundary ? ", at a parameter boundary" : "") << '\n';
  out << "weighted scores: " << r.ws.iterations << " iterations, scaled score " << r.ws.score_norm
      << (r.ws.jittered ? ", jittered working covariance" : "") << '\n';
  out.flags(flags);
  out.precision(prec);
}

inline std::vector<nlohmann::json> fit_records(const FitReport& r) {
  using nlohmann::json;
  std::vector<json> recs;
  recs.push_back({{"record", "fit"},
                  {"family", family_name(r.family)},
                  {"structure", structure_name(r.cl1.corr.structure())},
                  {"n", r.n},
                  {"observations", r.observations},
                  {"L1", r.cl1.L1},
                  {"L2", r.cl1.L2},
                  {"stage1_iterations", r.cl1.stage1_iterations},
                  {"stage2_iterations", r.cl1.stage2_iterations},
                  {"ws_iterations", r.ws.iterations},
                  {"stage1_score_norm", r.cl1.stage1_score_norm},
                  {"stage2_gradient_norm", r.cl1.stage2_gradient_norm},
                  {"ws_score_norm", r.ws.score_norm},
                  {"boundary", r.cl1.boundary},
                  {"converged", r.cl1.stage1_converged && r.cl1.stage2_converged && r.ws.converged}});
  for (std::size_t m = 0; m < r.covariates.size(); ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    recs.push_back({{"record", "coefficient"},
                    {"name", r.covariates[m]},
                    {"cl1", r.cl1.beta[i]},
                    {"estimate", r.ws.beta_hat[i]},
                    {"se", r.ws.se[i]}});
  }
  const auto labels = correlation_labels(r.cl1.corr);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    recs.push_back({{"record", "correlation"}, {"name", labels[k]}, {"value", r.cl1.corr.params()[k]}});
  }
  return recs;
}

inline void print_selection(std::ostream& out, const SelectionReport& rep) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(6);
  out << std::left << std::setw(12) << "candidate" << std::setw(8) << "struct" << std::right << std::setw(8) << "params"
      << std::setw(14) << "L2" << std::setw(12) << "penalty" << std::setw(15) << "CL1AIC" << std::setw(15) << "CL1BIC"
      << '\n';
  for (const auto& c : rep.candidates) {
    out << std::left << std::setw(12) << c.label << std::setw(8) << structure_tag(c.structure) << std::right;
    if (!c.ok) {
      out << "  failed: " << c.error << '\n';
      continue;
    }
    std::ostringstream aic, bic;
    aic << std::setprecision(6) << c.aic << (c.label == rep.winner_aic ? " *" : "  ");
    bic << std::setprecision(6) << c.bic << (c.label == rep.winner_bic ? " *" : "  ");
    out << std::setw(8) << c.n_params << std::setw(14) << c.L2 << std::setw(12) << c.trace << std::setw(15) << aic.str()
        << std::setw(15) << bic.str() << '\n';
  }
  out << "\nCL1AIC selects " << rep.winner_aic << ", CL1BIC selects " << rep.winner_bic << "  (* minimum; ties go to "
      << rep.tie_rule << ")\n";
  out.flags(flags);
  out.precision(prec);
}

inline std::vector<nlohmann::json> selection_records(const SelectionReport& rep) {
  using nlohmann::json;
  std::vector<json> recs;
  for (const auto& c : rep.candidates) {
    json j{{"record", "candidate"}, {"label", c.label}, {"structure", structure_name(c.structure)},
           {"covariates", c.covariates}, {"ok", c.ok}};
    if (c.ok) {
      j["params"] = c.n_params;
      j["L2"] = c.L2;
      j["penalty_trace"] = c.trace;
      j["cl1aic"] = c.aic;
      j["cl1bic"] = c.bic;
      if (!c.warnings.empty()) j["warnings"] = c.warnings;
    } else {
      j["error"] = c.error;
    }
    recs.push_back(std::move(j));
  }
  recs.push_back({{"record", "selection"},
                  {"winner_aic", rep.winner_aic},
                  {"winner_bic", rep.winner_bic},
                  {"tie_rule", rep.tie_rule}});
  return recs;
}

/// Delimited frequency table with design metadata in leading comment lines.
inline void write_frequency_table(std::ostream& out, const FrequencyTable& t, char delimiter = ',') {
  out << "# design=" << t.design << " study=" << t.study << " true=" << t.true_structure << " n=" << t.n
      << " d=" << t.d << " B=" << t.B << " seed=" << t.seed << '\n';
  out << "criterion";
  for (const auto& l : t.labels) out << delimiter << l;
  out << delimiter << "failures\n";
  for (std::size_t c = 0; c < t.criteria.size(); ++c) {
    out << t.criteria[c];
    for (int v : t.counts[c]) out << delimiter << v;
    out << delimiter << t.failures[c] << '\n';
  }
  bool any = false;
  for (int v : t.candidate_failures) any = any || v > 0;
  if (any) {
    out << "# candidate fit failures:";
    for (std::size_t l = 0; l < t.labels.size(); ++l) out << ' ' << t.labels[l] << '=' << t.candidate_failures[l];
    out << '\n';
  }
}

inline nlohmann::json frequency_record(const FrequencyTable& t) {
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t c = 0; c < t.criteria.size(); ++c) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t l = 0; l < t.labels.size(); ++l) row[t.labels[l]] = t.counts[c][l];
    row["failures"] = t.failures[c];
    counts[t.criteria[c]] = std::move(row);
  }
  return {{"record", "frequency_table"},
          {"design", t.design},
          {"study", t.study},
          {"true_structure", t.true_structure},
          {"n", t.n},
          {"d", t.d},
          {"B", t.B},
          {"seed", t.seed},
          {"labels", t.labels},
          {"counts", counts},
          {"candidate_failures", t.candidate_failures}};
}

inline void write_records(std::ostream& out, const std::vector<nlohmann::json>& recs) {
  for (const auto& r : recs) out << r.dump() << '\n';
}

}  // namespace wscl
