#pragma once

// Structured run configuration: a JSON key-value tree describing the system,
// sets, horizon, controller, certificate, search, and validation options.
// Parse errors carry the offending key path (or byte/line position for
// syntax errors).

#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reachcert/benchmarks.hpp"
#include "reachcert/certificates.hpp"
#include "reachcert/model.hpp"
#include "reachcert/synthesis.hpp"
#include "reachcert/validation.hpp"

namespace reachcert {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationConfig {
  std::uint64_t mc_n = 10000;
  std::uint64_t seed = 0;
  std::uint32_t horizon_cap = 500;
  std::uint32_t check_samples = 10000;
};

struct RunConfig {
  StochasticSystem system;
  Controller controller;
  ReachAvoidSpec spec;
  CertificateKind kind = CertificateKind::TiInfinite;
  CertificateOptions certificate;
  std::uint32_t varying_steps = 5;
  SearchSettings search;
  ValidationConfig validation;
  std::optional<OracleGridSpec> oracle_grid;
  std::uint32_t oracle_horizon = 50;
  std::string out_dir = "reachcert_out";
  std::string solver_backend = "embedded";
  std::string source_name = "config";
};

namespace config_detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at '" + path + "': " + what);
}

inline const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(path + "." + key, "missing required key");
  return j.at(key);
}

template <typename T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const std::exception& e) {
    fail(path, std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& path, T def) {
  if (!j.is_object() || !j.contains(key)) return def;
  return as<T>(j.at(key), path + "." + key);
}

inline std::vector<double> vec_of(const json& j, const std::string& path) {
  auto v = as<std::vector<double>>(j, path);
  if (v.empty()) fail(path, "empty vector");
  return v;
}

inline SemialgebraicSet parse_set(const json& j, const std::string& path) {
  if (j.contains("box")) {
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 2) fail(path + ".box", "expected [lo, hi]");
    return box_set(vec_of(b.at(0), path + ".box[0]"), vec_of(b.at(1), path + ".box[1]"));
  }
  if (j.contains("inequalities")) {
    SemialgebraicSet s;
    for (std::size_t i = 0; i < j.at("inequalities").size(); ++i) {
      const auto text = as<std::string>(j.at("inequalities").at(i),
                                        path + ".inequalities[" + std::to_string(i) + "]");
      try {
        s.constraints.push_back(parse_polynomial(text));
      } catch (const std::exception& e) {
        fail(path + ".inequalities[" + std::to_string(i) + "]", e.what());
      }
    }
    if (j.contains("bbox")) {
      const auto& b = j.at("bbox");
      s.box_lo = vec_of(b.at(0), path + ".bbox[0]");
      s.box_hi = vec_of(b.at(1), path + ".bbox[1]");
    }
    return s;
  }
  fail(path, "expected 'box' or 'inequalities'");
}

inline RegionUnion parse_region(const json& j, const std::string& path) {
  RegionUnion u;
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty list of pieces");
  for (std::size_t i = 0; i < j.size(); ++i)
    u.pieces.push_back(parse_set(j.at(i), path + "[" + std::to_string(i) + "]"));
  return u;
}

inline Horizon parse_horizon(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return Horizon::inf();
    fail(path, "expected an integer or \"inf\"");
  }
  const auto v = as<std::int64_t>(j, path);
  if (v < 0) fail(path, "horizon must be >= 0");
  return Horizon::finite(static_cast<std::uint32_t>(v));
}

}  // namespace config_detail

/// Derives safe-minus-reach when the reach box spans the safe box fully in
/// all dimensions but one and touches one of that dimension's faces; returns
/// nullopt otherwise (caller must then supply it explicitly).
inline std::optional<RegionUnion> derive_safe_minus_reach(const SemialgebraicSet& safe,
                                                          const SemialgebraicSet& reach) {
  if (!safe.is_box() || !reach.is_box()) return std::nullopt;
  const auto& slo = *safe.box_lo;
  const auto& shi = *safe.box_hi;
  const auto& rlo = *reach.box_lo;
  const auto& rhi = *reach.box_hi;
  const double tol = 1e-9;
  int differing = -1;
  for (std::size_t d = 0; d < slo.size(); ++d) {
    const bool full = std::abs(rlo[d] - slo[d]) < tol && std::abs(rhi[d] - shi[d]) < tol;
    if (full) continue;
    if (differing >= 0) return std::nullopt;
    differing = static_cast<int>(d);
  }
  if (differing < 0) return std::nullopt;  // reach == safe
  const std::size_t d = static_cast<std::size_t>(differing);
  auto lo = slo, hi = shi;
  if (std::abs(rlo[d] - slo[d]) < tol) {
    lo[d] = rhi[d];  // reach occupies the low side
  } else if (std::abs(rhi[d] - shi[d]) < tol) {
    hi[d] = rlo[d];  // reach occupies the high side
  } else {
    return std::nullopt;  // reach strictly inside: two pieces would be needed
  }
  if (!(lo[d] < hi[d])) return std::nullopt;
  return RegionUnion{{box_set(lo, hi)}};
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  RunConfig rc;

  // system
  const auto& sys = need(j, "system", "");
  const auto dyn_list = need(sys, "dynamics", "system");
  std::vector<Polynomial> dynamics;
  for (std::size_t i = 0; i < dyn_list.size(); ++i) {
    const auto text =
        as<std::string>(dyn_list.at(i), "system.dynamics[" + std::to_string(i) + "]");
    try {
      dynamics.push_back(parse_polynomial(text));
    } catch (const std::exception& e) {
      fail("system.dynamics[" + std::to_string(i) + "]", e.what());
    }
  }
  const auto variances =
      vec_of(need(need(j, "noise", ""), "variances", "noise"), "noise.variances");
  std::uint32_t m = get_or<std::uint32_t>(sys, "inputs", "system", 0);
  for (const auto& p : dynamics)
    for (VarId v : p.variables())
      if (var_kind(v) == VarKind::Input) m = std::max(m, var_index(v));
  try {
    rc.system = StochasticSystem(static_cast<std::uint32_t>(dynamics.size()), m, dynamics,
                                 NoiseSpec(variances));
  } catch (const std::exception& e) {
    fail("system", e.what());
  }

  // sets + horizon
  const auto& sets = need(j, "sets", "");
  const auto safe = parse_set(need(sets, "safe", "sets"), "sets.safe");
  const auto initial = parse_set(need(sets, "initial", "sets"), "sets.initial");
  const auto reach = parse_set(need(sets, "reach", "sets"), "sets.reach");
  const auto unsafe = parse_region(need(sets, "unsafe", "sets"), "sets.unsafe");
  RegionUnion sbar;
  if (sets.contains("safe_minus_reach")) {
    sbar = parse_region(sets.at("safe_minus_reach"), "sets.safe_minus_reach");
  } else {
    auto derived = derive_safe_minus_reach(safe, reach);
    if (!derived)
      fail("sets.safe_minus_reach",
           "cannot derive from safe/reach boxes; provide the pieces explicitly");
    sbar = *derived;
  }
  const Horizon horizon =
      parse_horizon(need(need(j, "spec", ""), "horizon", "spec"), "spec.horizon");
  try {
    rc.spec = ReachAvoidSpec(safe, initial, reach, unsafe, sbar, horizon);
  } catch (const std::exception& e) {
    fail("sets", e.what());
  }
  if (sets.contains("level_caps"))
    rc.certificate.level_cap_pieces = parse_region(sets.at("level_caps"), "sets.level_caps");

  // controller
  const auto& ctl = need(j, "controller", "");
  const auto mode = get_or<std::string>(ctl, "mode", "controller", "fixed");
  const auto uset = parse_set(need(ctl, "U", "controller"), "controller.U");
  if (mode == "template") {
    rc.controller = Controller::linear_template(rc.system.m, rc.system.n, uset);
  } else if (mode == "fixed") {
    Controller c;
    c.mode = Controller::Mode::Fixed;
    c.admissible = uset;
    if (ctl.contains("policies_per_step")) {
      c.time_varying = true;
      for (std::size_t s = 0; s < ctl.at("policies_per_step").size(); ++s) {
        std::vector<Polynomial> step;
        for (std::size_t i = 0; i < ctl.at("policies_per_step").at(s).size(); ++i)
          step.push_back(parse_polynomial(as<std::string>(
              ctl.at("policies_per_step").at(s).at(i),
              "controller.policies_per_step[" + std::to_string(s) + "]")));
        c.policies.push_back(std::move(step));
      }
    } else {
      std::vector<Polynomial> step;
      if (ctl.contains("policies"))
        for (std::size_t i = 0; i < ctl.at("policies").size(); ++i) {
          const auto text = as<std::string>(ctl.at("policies").at(i),
                                            "controller.policies[" + std::to_string(i) + "]");
          try {
            step.push_back(parse_polynomial(text));
          } catch (const std::exception& e) {
            fail("controller.policies[" + std::to_string(i) + "]", e.what());
          }
        }
      while (step.size() < rc.system.m) step.push_back(Polynomial(0.0));
      c.policies.push_back(std::move(step));
    }
    rc.controller = c;
  } else {
    fail("controller.mode", "expected 'fixed' or 'template'");
  }

  // certificate
  if (j.contains("certificate")) {
    const auto& cj = j.at("certificate");
    rc.kind = certificate_kind_from_string(
        get_or<std::string>(cj, "kind", "certificate", "ti-inf"));
    rc.certificate.degree = get_or<std::uint32_t>(cj, "degree", "certificate", 4);
    rc.certificate.degree_cap =
        get_or<std::uint32_t>(cj, "degree_cap", "certificate",
                              std::max(rc.certificate.degree, 12u));
    rc.certificate.relaxed_nonneg =
        get_or<bool>(cj, "relaxed_nonneg", "certificate", false);
    rc.certificate.quadratic_boxes =
        get_or<bool>(cj, "quadratic_boxes", "certificate", true);
    rc.varying_steps = get_or<std::uint32_t>(cj, "k", "certificate", 5);
    if (cj.contains("per_step_degrees"))
      rc.certificate.per_step_degrees = as<std::vector<std::uint32_t>>(
          cj.at("per_step_degrees"), "certificate.per_step_degrees");
  }

  // search
  if (j.contains("search")) {
    const auto& sj = j.at("search");
    rc.search.kind = certificate_kind_from_string(
        get_or<std::string>(sj, "kind", "search", std::string(to_string(rc.kind))));
    rc.search.max_iterations = get_or<std::uint32_t>(sj, "iterations", "search", 6);
    rc.search.golden_evals = get_or<std::uint32_t>(sj, "golden_evals", "search", 8);
    rc.search.improvement_tol = get_or<double>(sj, "improvement_tol", "search", 1e-3);
    rc.search.varying_steps = get_or<std::uint32_t>(sj, "k", "search", rc.varying_steps);
  }
  rc.search.certificate = rc.certificate;

  // validation
  if (j.contains("validation")) {
    const auto& vj = j.at("validation");
    rc.validation.mc_n = get_or<std::uint64_t>(vj, "mc_n", "validation", 10000);
    rc.validation.seed = get_or<std::uint64_t>(vj, "seed", "validation", 0);
    rc.validation.horizon_cap = get_or<std::uint32_t>(vj, "horizon_cap", "validation", 500);
    rc.validation.check_samples =
        get_or<std::uint32_t>(vj, "check_samples", "validation", 10000);
  }

  // oracle
  if (j.contains("oracle")) {
    const auto& oj = j.at("oracle");
    OracleGridSpec g;
    if (oj.contains("lo")) {
      g.lo = vec_of(oj.at("lo"), "oracle.lo");
      g.hi = vec_of(oj.at("hi"), "oracle.hi");
    } else {
      std::tie(g.lo, g.hi) = rc.spec.safe.bounding_box();
    }
    const auto cells = get_or<std::vector<int>>(oj, "cells", "oracle",
                                                std::vector<int>(g.lo.size(), 400));
    g.cells = cells;
    rc.oracle_grid = g;
    rc.oracle_horizon = get_or<std::uint32_t>(oj, "horizon", "oracle", 50);
  }

  if (j.contains("output"))
    rc.out_dir = get_or<std::string>(j.at("output"), "dir", "output", "reachcert_out");
  return rc;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f, nullptr, /*allow_exceptions=*/true,
                              /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config syntax error in " + path + ": " + e.what());
  }
  RunConfig rc = parse_config(j);
  rc.source_name = path;
  return rc;
}

/// Registry benchmark as a run configuration, with optional overrides applied
/// by the CLI afterwards.
inline RunConfig benchmark_config(const std::string& name,
                                  std::optional<Horizon> horizon = std::nullopt) {
  const Benchmark b = make_benchmark(name, horizon);
  RunConfig rc;
  rc.system = b.system;
  rc.controller = b.controller;
  rc.spec = b.spec;
  rc.kind = b.default_kind;
  rc.certificate.level_cap_pieces = b.level_caps;
  rc.certificate.degree = b.default_degree;
  rc.certificate.degree_cap = std::max(b.default_degree, 12u);
  rc.varying_steps = b.default_k;
  rc.search.kind = CertificateKind::TvUnbounded;
  rc.search.varying_steps = 4;
  rc.search.certificate = rc.certificate;
  rc.search.certificate.degree = 4;
  rc.oracle_grid = b.oracle_grid;
  rc.source_name = "benchmark:" + name;
  return rc;
}

}  // namespace reachcert
