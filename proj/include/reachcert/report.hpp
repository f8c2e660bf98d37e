#pragma once

// Run reports: one structured JSON document per run plus optional CSVs
// (plot grids, search traces, benchmark results table).

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "reachcert/certificates.hpp"
#include "reachcert/synthesis.hpp"
#include "reachcert/validation.hpp"

namespace reachcert {

inline nlohmann::json certificate_report(const Certificate& c) {
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  j["status"] = to_string(c.status);
  j["degree"] = c.degree;
  if (c.horizon.infinite)
    j["horizon"] = "inf";
  else
    j["horizon"] = c.horizon.steps;
  if (c.kind == CertificateKind::TvUnbounded) j["varying_steps"] = c.varying_steps;
  j["gamma"] = c.gamma;
  j["alphas"] = c.alphas;
  j["betas"] = c.betas;
  if (c.optimal()) {
    j["bound_raw"] = bound_of(c);
    j["bound_clamped"] = clamp01(bound_of(c));
  }
  j["solver"] = {{"message", c.solver_message},
                 {"iterations", c.iterations},
                 {"seconds", c.solve_seconds},
                 {"max_equality_residual", c.max_residual},
                 {"min_gram_eigenvalue", c.min_gram_eigenvalue}};
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& [deg, st] : c.attempts)
    attempts.push_back({{"degree", deg}, {"status", to_string(st)}});
  j["solver"]["degree_attempts"] = attempts;
  return j;
}

inline nlohmann::json check_report_json(const CheckReport& r) {
  nlohmann::json j;
  j["worst_violation"] = r.worst_violation;
  j["min_gram_eigenvalue"] = r.min_gram_eigenvalue;
  j["max_reconstruction_error"] = r.max_reconstruction_error;
  j["max_equality_residual"] = r.max_equality_residual;
  j["raw_bound"] = r.raw_bound;
  j["adjusted_bound"] = r.adjusted_bound;
  j["horizon_effective"] = r.horizon_effective;
  nlohmann::json worst = nlohmann::json::array();
  for (const auto& c : r.constraints)
    if (c.worst_violation > 0)
      worst.push_back({{"name", c.name},
                       {"violation", c.worst_violation},
                       {"witness", c.witness}});
  j["violated_constraints"] = worst;
  return j;
}

inline nlohmann::json mc_report_json(const McReport& r) {
  return {{"trajectories", r.trajectories},
          {"successes", r.successes},
          {"estimate", r.estimate},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"min_grid_estimate", r.min_grid_estimate},
          {"min_grid_ci_low", r.min_grid_ci_low},
          {"min_grid_ci_high", r.min_grid_ci_high},
          {"horizon_used", r.horizon_used},
          {"truncated", r.truncated},
          {"seed", r.seed}};
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline void append_results_row(const std::string& path, const std::string& benchmark,
                               const std::string& kind, std::uint32_t degree,
                               const std::string& horizon, double bound_raw,
                               double bound_adjusted, double mc_estimate, double mc_ci_low,
                               double mc_ci_high, const std::string& status, double seconds) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(path).parent_path());
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open " + path + " for appending");
  if (fresh)
    f << "benchmark,kind,degree,horizon,bound_raw,bound_adjusted,mc_estimate,mc_ci_low,"
         "mc_ci_high,status,seconds\n";
  f.precision(10);
  f << benchmark << "," << kind << "," << degree << "," << horizon << "," << bound_raw << ","
    << bound_adjusted << "," << mc_estimate << "," << mc_ci_low << "," << mc_ci_high << ","
    << status << "," << seconds << "\n";
}

inline void write_search_trace_csv(const std::string& path,
                                   const std::vector<SearchTraceEntry>& trace) {
  std::ostringstream os;
  os.precision(10);
  os << "iteration,candidate";
  if (!trace.empty())
    for (std::size_t p = 0; p < trace.front().params.size(); ++p) os << ",param" << p;
  os << ",bound\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << trace[i].iteration << "," << i;
    for (double v : trace[i].params) os << "," << v;
    os << "," << trace[i].bound << "\n";
  }
  write_text_file(path, os.str());
}

/// Row-major gain text for linear/affine controllers.
inline std::string controller_gains_text(const Controller& c) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& p : c.policy_at(0)) os << to_string(p) << "\n";
  return os.str();
}

}  // namespace reachcert
