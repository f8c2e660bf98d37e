#pragma once

// Independent ground-truthing: Monte Carlo trajectory estimation with exact
// Clopper-Pearson intervals, a grid value-iteration oracle for state
// dimension <= 2, and numeric re-checking of solved certificates.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachcert/certificates.hpp"
#include "reachcert/model.hpp"
#include "reachcert/threads.hpp"

namespace reachcert {

// ---------------------------------------------------------------------------
// Deterministic RNG substreams
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic normal sampler (Box-Muller over mt19937_64), independent of
/// the standard library's unspecified normal_distribution algorithm.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double uniform01() {
    return (static_cast<double>(rng_() >> 11)) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Flattened polynomial evaluator over (x, w) slots for the hot simulation loop.
struct FastPoly {
  struct Term {
    double c;
    std::vector<std::pair<int, std::uint32_t>> exps;  // (slot, exponent)
  };
  std::vector<Term> terms;

  FastPoly() = default;
  FastPoly(const Polynomial& p, std::uint32_t n_states) {
    for (const auto& [m, c] : p.terms()) {
      Term t;
      t.c = c;
      for (const auto& [v, e] : m.factors()) {
        const int slot = (var_kind(v) == VarKind::State)
                             ? static_cast<int>(var_index(v)) - 1
                             : static_cast<int>(n_states + var_index(v)) - 1;
        t.exps.emplace_back(slot, e);
      }
      terms.push_back(std::move(t));
    }
  }

  double eval(const double* slots) const {
    double acc = 0.0;
    for (const auto& t : terms) {
      double v = t.c;
      for (const auto& [slot, e] : t.exps) {
        double b = slots[slot];
        std::uint32_t k = e;
        double pw = 1.0;
        while (k) {
          if (k & 1u) pw *= b;
          b *= b;
          k >>= 1u;
        }
        v *= pw;
      }
      acc += v;
    }
    return acc;
  }
};

struct FastSet {
  std::vector<FastPoly> constraints;
  FastSet() = default;
  FastSet(const SemialgebraicSet& s, std::uint32_t n) {
    for (const auto& h : s.constraints) constraints.emplace_back(h, n);
  }
  bool contains(const double* x) const {
    for (const auto& h : constraints)
      if (h.eval(x) < 0.0) return false;
    return true;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Clopper-Pearson interval
// ---------------------------------------------------------------------------

/// Exact binomial confidence interval at the given two-sided level.
inline std::pair<double, double> clopper_pearson(std::uint64_t successes, std::uint64_t n,
                                                 double level = 0.99) {
  if (n == 0) return {0.0, 1.0};
  const double alpha = 1.0 - level;
  double lo = 0.0, hi = 1.0;
  const double s = static_cast<double>(successes);
  const double nn = static_cast<double>(n);
  if (successes > 0) {
    boost::math::beta_distribution<double> dl(s, nn - s + 1.0);
    lo = boost::math::quantile(dl, alpha / 2.0);
  }
  if (successes < n) {
    boost::math::beta_distribution<double> dh(s + 1.0, nn - s);
    hi = boost::math::quantile(dh, 1.0 - alpha / 2.0);
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Monte Carlo trajectory estimation
// ---------------------------------------------------------------------------

struct McOptions {
  std::uint64_t trajectories = 1000;
  std::uint32_t horizon_cap = 500;  // used (and flagged) when H = infinity
  std::uint64_t seed = 0;
  std::uint32_t x0_grid_points = 10;
  unsigned threads = 0;  // 0 = thread_cap()
};

struct McReport {
  std::uint64_t trajectories = 0;
  std::uint64_t successes = 0;
  double estimate = 0.0;           // uniform over X_0
  double ci_low = 0.0, ci_high = 1.0;
  double min_grid_estimate = 0.0;  // min over the deterministic X_0 grid
  double min_grid_ci_low = 0.0, min_grid_ci_high = 1.0;
  std::uint32_t horizon_used = 0;
  bool truncated = false;
  std::uint64_t seed = 0;
};

/// Event semantics per the reach-avoid definition: success at the first k with
/// x_k in X_r provided every earlier state stayed in X_s and outside X_u;
/// entering X_u, leaving X_s, or exhausting the horizon is failure.
inline McReport simulate(const StochasticSystem& system, const Controller& controller,
                         const ReachAvoidSpec& spec, const McOptions& opt = {}) {
  if (opt.trajectories == 0) throw std::invalid_argument("simulate: need trajectories >= 1");
  const std::uint32_t n = system.n;
  const std::uint32_t wd = system.noise.dim();
  const std::uint32_t horizon =
      spec.horizon.infinite ? opt.horizon_cap : spec.horizon.steps;

  // Precompile the closed loop (per step if the controller varies in time).
  const std::uint32_t distinct_steps =
      controller.time_varying ? std::max<std::uint32_t>(horizon, 1) : 1;
  std::vector<std::vector<detail::FastPoly>> dyn(distinct_steps);
  for (std::uint32_t s = 0; s < distinct_steps; ++s) {
    const auto cl = closed_loop(system, controller, s);
    for (const auto& f : cl) dyn[s].emplace_back(f, n);
  }
  const detail::FastSet reach(spec.reach, n);
  const detail::FastSet safe(spec.safe, n);
  std::vector<detail::FastSet> unsafe;
  for (const auto& p : spec.unsafe.pieces) unsafe.emplace_back(p, n);

  std::vector<double> sigma(wd);
  for (std::uint32_t j = 0; j < wd; ++j) sigma[j] = std::sqrt(system.noise.variances[j]);

  auto run_trajectory = [&](detail::NormalSampler& rng, const double* x0) {
    std::vector<double> slots(n + wd);
    for (std::uint32_t i = 0; i < n; ++i) slots[i] = x0[i];
    std::vector<double> next(n);
    for (std::uint32_t k = 0;; ++k) {
      if (reach.contains(slots.data())) return true;
      for (const auto& piece : unsafe)
        if (piece.contains(slots.data())) return false;
      if (!safe.contains(slots.data())) return false;
      if (k >= horizon) return false;
      for (std::uint32_t j = 0; j < wd; ++j) slots[n + j] = sigma[j] * rng();
      const auto& f = dyn[controller.time_varying ? std::min(k, distinct_steps - 1) : 0];
      for (std::uint32_t i = 0; i < n; ++i) next[i] = f[i].eval(slots.data());
      for (std::uint32_t i = 0; i < n; ++i) slots[i] = next[i];
    }
  };

  auto [x0_lo, x0_hi] = spec.initial.bounding_box();

  // uniform-over-X_0 estimate, deterministic chunked substreams
  const std::uint64_t chunk_size = 4096;
  const std::uint64_t chunks = (opt.trajectories + chunk_size - 1) / chunk_size;
  std::atomic<std::uint64_t> successes{0};
  parallel_chunks(
      chunks,
      [&](std::uint64_t c) {
        detail::NormalSampler rng(detail::splitmix64(opt.seed ^ (c + 1)));
        const std::uint64_t begin = c * chunk_size;
        const std::uint64_t end = std::min(opt.trajectories, begin + chunk_size);
        std::uint64_t local = 0;
        std::vector<double> x0(n);
        for (std::uint64_t t = begin; t < end; ++t) {
          do {
            for (std::uint32_t i = 0; i < n; ++i)
              x0[i] = x0_lo[i] + (x0_hi[i] - x0_lo[i]) * rng.uniform01();
          } while (!spec.initial.contains(x0));
          if (run_trajectory(rng, x0.data())) ++local;
        }
        successes += local;
      },
      opt.threads);

  McReport rep;
  rep.trajectories = opt.trajectories;
  rep.successes = successes.load();
  rep.estimate = static_cast<double>(rep.successes) / static_cast<double>(rep.trajectories);
  std::tie(rep.ci_low, rep.ci_high) = clopper_pearson(rep.successes, rep.trajectories);
  rep.horizon_used = horizon;
  rep.truncated = spec.horizon.infinite;
  rep.seed = opt.seed;

  // min over a deterministic X_0 grid, approximating the inf in the property
  const auto grid = detail::lattice_points(x0_lo, x0_hi, opt.x0_grid_points);
  const std::uint64_t per_point = std::max<std::uint64_t>(opt.trajectories / grid.size(), 1);
  double min_est = 2.0;
  std::uint64_t min_succ = 0, min_n = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!spec.initial.contains(grid[g])) continue;
    std::atomic<std::uint64_t> succ{0};
    const std::uint64_t gchunks = (per_point + chunk_size - 1) / chunk_size;
    parallel_chunks(
        gchunks,
        [&](std::uint64_t c) {
          detail::NormalSampler rng(
              detail::splitmix64(opt.seed ^ ((g + 2) * 0x10001ULL) ^ (c + 1)));
          const std::uint64_t begin = c * chunk_size;
          const std::uint64_t end = std::min(per_point, begin + chunk_size);
          std::uint64_t local = 0;
          for (std::uint64_t t = begin; t < end; ++t)
            if (run_trajectory(rng, grid[g].data())) ++local;
          succ += local;
        },
        opt.threads);
    const double est = static_cast<double>(succ.load()) / static_cast<double>(per_point);
    if (est < min_est) {
      min_est = est;
      min_succ = succ.load();
      min_n = per_point;
    }
  }
  if (min_est > 1.0) min_est = rep.estimate, min_succ = rep.successes, min_n = rep.trajectories;
  rep.min_grid_estimate = min_est;
  std::tie(rep.min_grid_ci_low, rep.min_grid_ci_high) = clopper_pearson(min_succ, min_n);
  return rep;
}

// ---------------------------------------------------------------------------
// Grid value-iteration oracle (state dimension <= 2)
// ---------------------------------------------------------------------------

struct OracleGridSpec {
  std::vector<double> lo, hi;
  std::vector<int> cells;  // cells per dimension; nodes = cells + 1
};

struct OracleGrid {
  OracleGridSpec grid;
  std::uint32_t horizon = 0;
  /// values[k] = V_k on grid nodes (row-major over dims), k = 0..H
  std::vector<std::vector<double>> values;

  std::size_t node_count() const {
    std::size_t c = 1;
    for (int v : grid.cells) c *= static_cast<std::size_t>(v) + 1;
    return c;
  }

  /// Multilinear interpolation of V_k; points outside the grid count as
  /// unsafe (value 0), matching the simulator's outside-safe semantics.
  double value_at(std::uint32_t k, const std::vector<double>& x) const {
    const auto& vals = values.at(k);
    const std::size_t dim = grid.lo.size();
    std::vector<int> base(dim);
    std::vector<double> frac(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const double h = (grid.hi[d] - grid.lo[d]) / grid.cells[d];
      const double t = (x[d] - grid.lo[d]) / h;
      if (t < 0.0 || t > static_cast<double>(grid.cells[d])) return 0.0;
      base[d] = std::min(static_cast<int>(t), grid.cells[d] - 1);
      frac[d] = t - base[d];
    }
    double acc = 0.0;
    const std::size_t corners = static_cast<std::size_t>(1) << dim;
    for (std::size_t mask = 0; mask < corners; ++mask) {
      double wgt = 1.0;
      std::size_t idx = 0, stride = 1;
      for (std::size_t d = 0; d < dim; ++d) {
        const bool up = mask & (static_cast<std::size_t>(1) << d);
        wgt *= up ? frac[d] : 1.0 - frac[d];
        idx += stride * static_cast<std::size_t>(base[d] + (up ? 1 : 0));
        stride *= static_cast<std::size_t>(grid.cells[d]) + 1;
      }
      acc += wgt * vals[idx];
    }
    return acc;
  }

  /// inf of V_H over the initial set, evaluated on initial-set nodes plus a
  /// lattice refinement.
  double inf_over(const SemialgebraicSet& set) const {
    auto [lo, hi] = set.bounding_box();
    double m = 1.0;
    for (const auto& p : detail::lattice_points(lo, hi, 512))
      if (set.contains(p)) m = std::min(m, value_at(horizon, p));
    return m;
  }
};

/// Gauss-Hermite nodes/weights such that E[g(w)] ~ sum_i weight_i g(node_i)
/// for w ~ N(0, variance); exact for polynomial g up to degree 2*points - 1.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int points,
                                                                         double variance) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points, points);
  for (int i = 0; i + 1 < points; ++i) {
    const double v = std::sqrt((i + 1) / 2.0);
    J(i, i + 1) = v;
    J(i + 1, i) = v;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> nodes(points), weights(points);
  const double sigma = std::sqrt(variance);
  for (int i = 0; i < points; ++i) {
    nodes[i] = es.eigenvalues()[i] * std::sqrt(2.0) * sigma;
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = v0 * v0;
  }
  return {nodes, weights};
}

/// DP recursion on a grid: V_0 = indicator of X_r; V_k = 1 on X_r, 0 on X_u or
/// outside X_s, else the expectation of V_{k-1} after one closed-loop step
/// (Gauss-Hermite quadrature, multilinear interpolation). Values in [0, 1],
/// nondecreasing in k.
inline OracleGrid value_iteration(const StochasticSystem& system, const Controller& controller,
                                  const ReachAvoidSpec& spec, const OracleGridSpec& grid,
                                  std::uint32_t horizon, int quad_points = 7) {
  const std::uint32_t n = system.n;
  if (n > 2) throw std::invalid_argument("value_iteration: state dimension must be <= 2");
  if (grid.lo.size() != n || grid.cells.size() != n)
    throw std::invalid_argument("value_iteration: grid dimension mismatch");
  if (controller.mode != Controller::Mode::Fixed)
    throw std::invalid_argument("value_iteration: controller must be fixed");

  OracleGrid out;
  out.grid = grid;
  out.horizon = horizon;

  const std::size_t nodes_total = out.node_count();
  std::vector<std::vector<double>> node_coord(nodes_total, std::vector<double>(n));
  {
    std::vector<int> idx(n, 0);
    for (std::size_t node = 0; node < nodes_total; ++node) {
      for (std::uint32_t d = 0; d < n; ++d)
        node_coord[node][d] =
            grid.lo[d] + (grid.hi[d] - grid.lo[d]) * idx[d] / grid.cells[d];
      std::size_t d = 0;
      while (d < n && ++idx[d] > grid.cells[d]) idx[d] = 0, ++d;
    }
  }

  enum class Cat : std::uint8_t { Reach, Dead, Step };
  std::vector<Cat> cat(nodes_total);
  for (std::size_t node = 0; node < nodes_total; ++node) {
    const auto& x = node_coord[node];
    if (spec.reach.contains(x))
      cat[node] = Cat::Reach;
    else if (spec.unsafe.contains(x) || !spec.safe.contains(x))
      cat[node] = Cat::Dead;
    else
      cat[node] = Cat::Step;
  }

  // closed loop compiled once (time-invariant controller assumed for the oracle)
  const auto cl = closed_loop(system, controller, 0);
  std::vector<detail::FastPoly> dyn;
  for (const auto& f : cl) dyn.emplace_back(f, n);

  // tensorized quadrature over noise dims
  const std::uint32_t wd = system.noise.dim();
  std::vector<std::vector<double>> qnodes(wd), qweights(wd);
  for (std::uint32_t j = 0; j < wd; ++j)
    std::tie(qnodes[j], qweights[j]) = gauss_hermite(quad_points, system.noise.variances[j]);

  std::vector<double> v0(nodes_total);
  for (std::size_t node = 0; node < nodes_total; ++node)
    v0[node] = (cat[node] == Cat::Reach) ? 1.0 : 0.0;
  out.values.push_back(std::move(v0));

  std::vector<std::uint32_t> qidx(wd);
  for (std::uint32_t k = 1; k <= horizon; ++k) {
    const auto& prev_vals = out.values.back();
    std::vector<double> next(nodes_total);
    // interpolator over the previous layer
    OracleGrid prev;
    prev.grid = grid;
    prev.horizon = 0;
    prev.values = {prev_vals};

    parallel_chunks(nodes_total, [&](std::uint64_t node) {
      switch (cat[node]) {
        case Cat::Reach: next[node] = 1.0; return;
        case Cat::Dead: next[node] = 0.0; return;
        case Cat::Step: break;
      }
      std::vector<double> slots(n + wd), xp(n);
      for (std::uint32_t d = 0; d < n; ++d) slots[d] = node_coord[node][d];
      double acc = 0.0;
      std::vector<std::uint32_t> q(wd, 0);
      while (true) {
        double wgt = 1.0;
        for (std::uint32_t j = 0; j < wd; ++j) {
          slots[n + j] = qnodes[j][q[j]];
          wgt *= qweights[j][q[j]];
        }
        for (std::uint32_t d = 0; d < n; ++d) xp[d] = dyn[d].eval(slots.data());
        acc += wgt * prev.value_at(0, xp);
        std::uint32_t j = 0;
        while (j < wd && ++q[j] >= static_cast<std::uint32_t>(quad_points)) q[j] = 0, ++j;
        if (j == wd) break;
      }
      next[node] = std::min(1.0, std::max(0.0, acc));
    });
    out.values.push_back(std::move(next));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Certificate re-checking
// ---------------------------------------------------------------------------

struct CheckOptions {
  std::uint32_t samples = 10000;
  double tol = 1e-6;
  std::uint64_t seed = 20240915;
  /// Effective horizon for shaving infinite-horizon certificates.
  std::uint32_t infinite_horizon_effective = 500;
};

struct ConstraintCheck {
  std::string name;
  double worst_violation = 0.0;  // max(0, -min sampled expr)
  std::vector<double> witness;
};

struct CheckReport {
  std::vector<ConstraintCheck> constraints;
  double worst_violation = 0.0;
  double min_gram_eigenvalue = 0.0;
  double max_reconstruction_error = 0.0;
  double max_equality_residual = 0.0;
  double raw_bound = 0.0;
  double adjusted_bound = 0.0;  // raw - max(0, worst violation) * H_effective
  std::uint32_t horizon_effective = 0;
  bool gram_psd_ok = false;

  bool passed(double tol) const {
    return worst_violation <= tol && gram_psd_ok && adjusted_bound >= raw_bound - 1e-12;
  }
};

/// Re-evaluates every formulation inequality of the certificate at points
/// sampled from its domain, re-checks all Gram blocks, and conservatively
/// shaves the bound by any measured violation.
inline CheckReport check_certificate(const Certificate& cert, const StochasticSystem& system,
                                     const Controller& controller, const ReachAvoidSpec& spec,
                                     const CheckOptions& opt = {}) {
  (void)system;
  (void)controller;
  CheckReport rep;
  if (!cert.optimal() && cert.status != SdpStatus::NumericalTrouble)
    throw std::logic_error("check_certificate: certificate has no usable iterate");

  detail::NormalSampler rng(detail::splitmix64(opt.seed));
  for (const auto& c : cert.constraints) {
    ConstraintCheck cc;
    cc.name = c.name;
    auto [lo, hi] = c.domain.is_box() ? c.domain.bounding_box() : spec.safe.bounding_box();
    const std::size_t dim = lo.size();
    std::vector<double> x(dim);
    double worst = std::numeric_limits<double>::infinity();
    std::uint32_t accepted = 0, attempts = 0;
    while (accepted < opt.samples && attempts < opt.samples * 50) {
      ++attempts;
      for (std::size_t d = 0; d < dim; ++d)
        x[d] = lo[d] + (hi[d] - lo[d]) * rng.uniform01();
      if (!c.domain.contains(x)) continue;
      ++accepted;
      VarValues point;
      for (std::size_t d = 0; d < dim; ++d)
        point[state_var(static_cast<std::uint32_t>(d) + 1)] = x[d];
      const double v = c.expr.evaluate(point);
      if (v < worst) {
        worst = v;
        cc.witness = x;
      }
    }
    cc.worst_violation = (accepted > 0) ? std::max(0.0, -worst) : 0.0;
    rep.worst_violation = std::max(rep.worst_violation, cc.worst_violation);
    rep.constraints.push_back(std::move(cc));
  }

  rep.min_gram_eigenvalue = std::numeric_limits<double>::infinity();
  for (const auto& g : cert.grams) {
    if (g.Q.rows() > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.Q, Eigen::EigenvaluesOnly);
      rep.min_gram_eigenvalue = std::min(rep.min_gram_eigenvalue, es.eigenvalues().minCoeff());
    }
    rep.max_reconstruction_error = std::max(rep.max_reconstruction_error,
                                            g.reconstruction_error);
  }
  if (cert.grams.empty()) rep.min_gram_eigenvalue = 0.0;
  rep.gram_psd_ok = rep.min_gram_eigenvalue >= -opt.tol;
  rep.max_equality_residual = cert.max_residual;

  switch (cert.kind) {
    case CertificateKind::TvFinite:
    case CertificateKind::TiFinite:
      rep.horizon_effective = cert.horizon.steps;
      break;
    case CertificateKind::TvUnbounded:
      rep.horizon_effective = std::max(cert.varying_steps + 1, opt.infinite_horizon_effective);
      break;
    default:
      rep.horizon_effective = opt.infinite_horizon_effective;
  }
  rep.raw_bound = cert.optimal() ? bound_of(cert) : 0.0;
  rep.adjusted_bound =
      rep.raw_bound - std::max(0.0, rep.worst_violation) * rep.horizon_effective;
  if (rep.adjusted_bound > rep.raw_bound) rep.adjusted_bound = rep.raw_bound;
  return rep;
}

}  // namespace reachcert
