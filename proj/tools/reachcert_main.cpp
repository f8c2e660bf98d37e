// reachcert: synthesize, validate, and cross-check probabilistic reach-avoid
// certificates for discrete-time polynomial stochastic systems.
//
// Commands: verify, synthesize, simulate, oracle, benchmark.
// Exit codes: 0 success, 1 infeasible/non-optimal, 2 config error, 3 internal.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "reachcert/config.hpp"
#include "reachcert/report.hpp"

namespace rc = reachcert;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string benchmark;
  std::string kind;
  std::string horizon;
  std::string out_dir;
  std::string solver;
  int degree = -1;
  int k = -1;
  std::int64_t mc_n = -1;
  std::int64_t seed = -1;
  int plot_grid = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--benchmark", o.benchmark, "built-in benchmark name");
  cmd->add_option("--kind", o.kind, "certificate kind: tv, tv-inf, ti, ti-inf, ti-strict");
  cmd->add_option("--degree", o.degree, "certificate polynomial degree (even)");
  cmd->add_option("--horizon", o.horizon, "horizon: integer or 'inf'");
  cmd->add_option("--k", o.k, "varying steps for tv-inf certificates");
  cmd->add_option("--seed", o.seed, "Monte Carlo seed");
  cmd->add_option("--mc-n", o.mc_n, "Monte Carlo trajectory count");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--solver", o.solver, "SDP backend: embedded, external");
  cmd->add_option("--plot-grid", o.plot_grid,
                  "export certificate values on an N-per-dimension grid");
}

rc::RunConfig load(const CommonOpts& o) {
  if (o.config_path.empty() && o.benchmark.empty())
    throw rc::ConfigError("provide --config <path> or --benchmark <name>");
  rc::RunConfig cfg = o.config_path.empty() ? rc::benchmark_config(o.benchmark)
                                            : rc::parse_config_file(o.config_path);

  if (!o.kind.empty()) cfg.kind = rc::certificate_kind_from_string(o.kind);
  if (o.degree >= 0) {
    if (o.degree % 2 != 0) throw rc::ConfigError("--degree must be even");
    cfg.certificate.degree = static_cast<std::uint32_t>(o.degree);
    cfg.certificate.degree_cap =
        std::max(cfg.certificate.degree, cfg.certificate.degree_cap);
  }
  if (!o.horizon.empty()) {
    if (o.horizon == "inf")
      cfg.spec.horizon = rc::Horizon::inf();
    else {
      const long v = std::atol(o.horizon.c_str());
      if (v < 0 || (v == 0 && o.horizon != "0"))
        throw rc::ConfigError("--horizon must be a nonnegative integer or 'inf'");
      cfg.spec.horizon = rc::Horizon::finite(static_cast<std::uint32_t>(v));
    }
  }
  if (o.k >= 1) cfg.varying_steps = static_cast<std::uint32_t>(o.k);
  if (o.mc_n >= 1) cfg.validation.mc_n = static_cast<std::uint64_t>(o.mc_n);
  if (o.seed >= 0) cfg.validation.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.solver.empty()) cfg.solver_backend = o.solver;
  cfg.certificate.backend = cfg.solver_backend;
  cfg.search.certificate.backend = cfg.solver_backend;
  return cfg;
}

/// Kind/horizon normalization for certificate-running commands: infinite
/// kinds force an infinite-horizon spec, finite kinds with an 'inf' horizon
/// promote to their infinite counterpart. Simulation-only commands keep the
/// configured horizon untouched.
void normalize_for_certificate(rc::RunConfig& cfg) {
  switch (cfg.kind) {
    case rc::CertificateKind::TvUnbounded:
    case rc::CertificateKind::TiInfinite:
    case rc::CertificateKind::TiStrict:
      cfg.spec.horizon = rc::Horizon::inf();
      break;
    case rc::CertificateKind::TiFinite:
      if (cfg.spec.horizon.infinite) cfg.kind = rc::CertificateKind::TiInfinite;
      break;
    case rc::CertificateKind::TvFinite:
      if (cfg.spec.horizon.infinite) cfg.kind = rc::CertificateKind::TvUnbounded;
      break;
  }
}

std::string out_path(const rc::RunConfig& cfg, const std::string& file) {
  return (std::filesystem::path(cfg.out_dir) / file).string();
}

void maybe_export_plot_grid(const rc::Certificate& cert, const rc::RunConfig& cfg,
                            int cells_per_dim) {
  if (cells_per_dim <= 0 || !cert.optimal()) return;
  auto [lo, hi] = cfg.spec.safe.bounding_box();
  std::ostringstream os;
  rc::export_plot_grid(cert, lo, hi, std::vector<int>(lo.size(), cells_per_dim), os);
  rc::write_text_file(out_path(cfg, "plot_grid.csv"), os.str());
}

/// Shared verify pipeline: certificate + independent checks + MC cross-check.
int run_certificate_pipeline(const std::string& command, rc::RunConfig& cfg,
                             const CommonOpts& opts, nlohmann::json* report_out = nullptr,
                             rc::Certificate* cert_out = nullptr) {
  normalize_for_certificate(cfg);
  rc::CertificateSynthesizer synth(cfg.system, cfg.controller, cfg.spec, cfg.certificate);
  const rc::Certificate cert = synth.synthesize(cfg.kind, cfg.varying_steps);

  nlohmann::json report;
  report["command"] = command;
  report["source"] = cfg.source_name;
  report["certificate"] = rc::certificate_report(cert);
  rc::write_text_file(out_path(cfg, "certificate.json"), rc::certificate_to_json(cert));

  int exit_code = 0;
  if (!cert.optimal()) {
    report["error"] = "certificate synthesis did not reach Optimal: " + cert.solver_message;
    exit_code = 1;
  } else {
    rc::CheckOptions copt;
    copt.samples = cfg.validation.check_samples;
    copt.infinite_horizon_effective = cfg.validation.horizon_cap;
    const rc::CheckReport check =
        rc::check_certificate(cert, cfg.system, cfg.controller, cfg.spec, copt);
    rc::McOptions mopt;
    mopt.trajectories = cfg.validation.mc_n;
    mopt.horizon_cap = cfg.validation.horizon_cap;
    mopt.seed = cfg.validation.seed;
    const rc::McReport mc = rc::simulate(cfg.system, cfg.controller, cfg.spec, mopt);
    report["check"] = rc::check_report_json(check);
    report["mc"] = rc::mc_report_json(mc);
    report["bound_raw"] = check.raw_bound;
    report["bound_adjusted"] = check.adjusted_bound;
    report["bound_clamped"] = rc::clamp01(check.raw_bound);
    maybe_export_plot_grid(cert, cfg, opts.plot_grid);
  }
  report["exit_code"] = exit_code;
  rc::write_json(out_path(cfg, "report.json"), report);
  std::cout << report.dump(2) << "\n";
  if (report_out) *report_out = report;
  if (cert_out) *cert_out = cert;
  return exit_code;
}

int run_verify(rc::RunConfig& cfg, const CommonOpts& opts) {
  return run_certificate_pipeline("verify", cfg, opts);
}

int run_synthesize(rc::RunConfig& cfg, const CommonOpts& opts) {
  normalize_for_certificate(cfg);
  if (cfg.controller.mode != rc::Controller::Mode::Template)
    cfg.controller = rc::Controller::linear_template(cfg.system.m, cfg.system.n,
                                                     cfg.controller.admissible);
  cfg.search.kind = cfg.kind;
  cfg.search.varying_steps = cfg.varying_steps;
  cfg.search.certificate = cfg.certificate;
  const rc::SynthesisResult result =
      rc::synthesize(cfg.system, cfg.controller, cfg.spec, cfg.search);

  nlohmann::json report;
  report["command"] = "synthesize";
  report["source"] = cfg.source_name;
  report["certificate"] = rc::certificate_report(result.certificate);
  report["search"] = {{"iterations", result.iterations},
                      {"best_bound_per_iteration", result.best_bound_per_iteration},
                      {"evaluations", result.trace.size()},
                      {"admissibility", result.admissibility.detail}};
  rc::write_search_trace_csv(out_path(cfg, "search_trace.csv"), result.trace);
  rc::write_text_file(out_path(cfg, "controller.txt"),
                      rc::controller_gains_text(result.controller));
  rc::write_text_file(out_path(cfg, "certificate.json"),
                      rc::certificate_to_json(result.certificate));

  int exit_code = 0;
  if (!result.certificate.optimal()) {
    report["error"] = "no Optimal certificate for the returned controller";
    exit_code = 1;
  } else {
    rc::CheckOptions copt;
    copt.samples = cfg.validation.check_samples;
    copt.infinite_horizon_effective = cfg.validation.horizon_cap;
    const rc::CheckReport check = rc::check_certificate(result.certificate, cfg.system,
                                                        result.controller, cfg.spec, copt);
    rc::McOptions mopt;
    mopt.trajectories = cfg.validation.mc_n;
    mopt.horizon_cap = cfg.validation.horizon_cap;
    mopt.seed = cfg.validation.seed;
    const rc::McReport mc = rc::simulate(cfg.system, result.controller, cfg.spec, mopt);
    report["check"] = rc::check_report_json(check);
    report["mc"] = rc::mc_report_json(mc);
    report["bound_raw"] = check.raw_bound;
    report["bound_adjusted"] = check.adjusted_bound;
    maybe_export_plot_grid(result.certificate, cfg, opts.plot_grid);
  }
  report["exit_code"] = exit_code;
  rc::write_json(out_path(cfg, "report.json"), report);
  std::cout << report.dump(2) << "\n";
  return exit_code;
}

int run_simulate(rc::RunConfig& cfg) {
  rc::McOptions mopt;
  mopt.trajectories = cfg.validation.mc_n;
  mopt.horizon_cap = cfg.validation.horizon_cap;
  mopt.seed = cfg.validation.seed;
  const rc::McReport mc = rc::simulate(cfg.system, cfg.controller, cfg.spec, mopt);
  nlohmann::json report;
  report["command"] = "simulate";
  report["source"] = cfg.source_name;
  report["mc"] = rc::mc_report_json(mc);
  report["exit_code"] = 0;
  rc::write_json(out_path(cfg, "report.json"), report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int run_oracle(rc::RunConfig& cfg) {
  if (cfg.system.n > 2)
    throw rc::ConfigError("oracle: value iteration supports state dimension <= 2");
  rc::OracleGridSpec grid;
  if (cfg.oracle_grid) {
    grid = *cfg.oracle_grid;
  } else {
    std::tie(grid.lo, grid.hi) = cfg.spec.safe.bounding_box();
    grid.cells.assign(grid.lo.size(), 400);
  }
  const std::uint32_t horizon =
      cfg.spec.horizon.infinite ? cfg.oracle_horizon : cfg.spec.horizon.steps;
  const rc::OracleGrid oracle =
      rc::value_iteration(cfg.system, cfg.controller, cfg.spec, grid, horizon);
  nlohmann::json report;
  report["command"] = "oracle";
  report["source"] = cfg.source_name;
  report["horizon"] = horizon;
  report["inf_over_initial"] = oracle.inf_over(cfg.spec.initial);
  report["exit_code"] = 0;
  rc::write_json(out_path(cfg, "report.json"), report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int run_benchmark(const std::string& name, CommonOpts opts) {
  opts.benchmark = name;
  rc::RunConfig cfg = load(opts);
  nlohmann::json report;
  rc::Certificate cert;
  const int code = run_certificate_pipeline("benchmark", cfg, opts, &report, &cert);

  const std::string horizon_text =
      cfg.spec.horizon.infinite ? "inf" : std::to_string(cfg.spec.horizon.steps);
  const double bound_raw = report.contains("bound_raw") ? report["bound_raw"].get<double>() : 0;
  const double bound_adj =
      report.contains("bound_adjusted") ? report["bound_adjusted"].get<double>() : 0;
  double mc_est = 0, mc_lo = 0, mc_hi = 1;
  if (report.contains("mc")) {
    mc_est = report["mc"]["estimate"].get<double>();
    mc_lo = report["mc"]["ci_low"].get<double>();
    mc_hi = report["mc"]["ci_high"].get<double>();
  }
  rc::append_results_row(out_path(cfg, "results.csv"), name, rc::to_string(cfg.kind),
                         cfg.certificate.degree, horizon_text, bound_raw, bound_adj, mc_est,
                         mc_lo, mc_hi, rc::to_string(cert.status), cert.solve_seconds);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  // cap BLAS threads in line with REACHCERT_THREADS before any solver work
  if (const char* t = std::getenv("REACHCERT_THREADS"))
    if (!std::getenv("OPENBLAS_NUM_THREADS")) setenv("OPENBLAS_NUM_THREADS", t, 0);

  CLI::App app{"reachcert: probabilistic reach-avoid certificates for stochastic systems"};
  app.require_subcommand(1);

  CommonOpts o_verify, o_synth, o_sim, o_oracle, o_bench;
  std::string bench_name;

  auto* verify = app.add_subcommand("verify", "synthesize a certificate for a fixed controller");
  add_common(verify, o_verify);
  auto* synth = app.add_subcommand("synthesize", "joint controller/certificate synthesis");
  add_common(synth, o_synth);
  auto* sim = app.add_subcommand("simulate", "Monte Carlo estimate only");
  add_common(sim, o_sim);
  auto* oracle = app.add_subcommand("oracle", "grid value-iteration oracle (dim <= 2)");
  add_common(oracle, o_oracle);
  auto* bench = app.add_subcommand("benchmark", "run a built-in benchmark end-to-end");
  bench->add_option("name", bench_name, "benchmark name")->required();
  add_common(bench, o_bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) {
      auto cfg = load(o_verify);
      return run_verify(cfg, o_verify);
    }
    if (synth->parsed()) {
      auto cfg = load(o_synth);
      return run_synthesize(cfg, o_synth);
    }
    if (sim->parsed()) {
      auto cfg = load(o_sim);
      return run_simulate(cfg);
    }
    if (oracle->parsed()) {
      auto cfg = load(o_oracle);
      return run_oracle(cfg);
    }
    if (bench->parsed()) return run_benchmark(bench_name, o_bench);
  } catch (const rc::ConfigError& e) {
    nlohmann::json err{{"error", e.what()}, {"exit_code", 2}};
    std::cerr << err.dump(2) << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    nlohmann::json err{{"error", e.what()}, {"exit_code", 2}};
    std::cerr << err.dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"exit_code", 3}};
    std::cerr << err.dump(2) << "\n";
    return 3;
  }
  return 2;
}
