#pragma once

// System, noise, controller and reach-avoid specification model, plus the
// Gaussian expectation operator that turns E[p(x, w)] into a polynomial in x.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachcert/parametric.hpp"
#include "reachcert/poly.hpp"

namespace reachcert {

/// Zero-mean Gaussian noise with diagonal covariance.
struct NoiseSpec {
  std::vector<double> variances;  // per component, >= 0

  std::uint32_t dim() const { return static_cast<std::uint32_t>(variances.size()); }

  explicit NoiseSpec(std::vector<double> vars = {}) : variances(std::move(vars)) {
    for (double v : variances)
      if (!(v >= 0)) throw std::invalid_argument("NoiseSpec: variances must be >= 0");
  }
};

/// E[w^order] for w ~ N(0, variance): odd moments vanish; even moments are
/// variance^(order/2) * (order-1)!!.
inline double gaussian_moment(std::uint32_t order, double variance) {
  if (!(variance >= 0)) throw std::invalid_argument("gaussian_moment: variance must be >= 0");
  if (order % 2 == 1) return 0.0;
  double m = 1.0;
  for (std::uint32_t k = 1; k < order; k += 2) m *= static_cast<double>(k);  // (order-1)!!
  return m * std::pow(variance, order / 2.0);
}

namespace detail {

template <typename Poly>
Poly expect_over_noise_impl(const Poly& p, const NoiseSpec& noise) {
  Poly out;
  for (const auto& [m, coeff] : p.terms()) {
    double moment_product = 1.0;
    std::vector<std::pair<VarId, std::uint32_t>> xpart;
    for (const auto& [v, e] : m.factors()) {
      switch (var_kind(v)) {
        case VarKind::Noise: {
          const std::uint32_t j = var_index(v);
          if (j > noise.dim())
            throw std::invalid_argument("expect_over_noise: undeclared noise variable " +
                                        var_name(v));
          moment_product *= gaussian_moment(e, noise.variances[j - 1]);
          break;
        }
        case VarKind::Input:
          throw std::invalid_argument(
              "expect_over_noise: input variable present; substitute the controller first");
        case VarKind::State:
          xpart.emplace_back(v, e);
          break;
      }
    }
    if (moment_product == 0.0) continue;
    out.add_term(Monomial(std::move(xpart)), coeff * moment_product);
  }
  return out;
}

}  // namespace detail

/// Integrates out all noise variables: each x^a * w^b becomes
/// x^a * prod_j E[w_j^{b_j}]. Linear in p; independent components.
inline Polynomial expect_over_noise(const Polynomial& p, const NoiseSpec& noise) {
  return detail::expect_over_noise_impl(p, noise);
}
inline ParametricPolynomial expect_over_noise(const ParametricPolynomial& p,
                                              const NoiseSpec& noise) {
  return detail::expect_over_noise_impl(p, noise);
}

/// {x : h_i(x) >= 0 for all i}. Boxes remember their bounds so the SOS layer
/// can switch to the per-dimension quadratic description and the samplers have
/// a bounding box to draw from.
struct SemialgebraicSet {
  std::vector<Polynomial> constraints;  // over state vars
  std::optional<std::vector<double>> box_lo, box_hi;

  bool is_box() const { return box_lo.has_value(); }

  double min_constraint(const std::vector<double>& x) const {
    VarValues point;
    for (std::size_t i = 0; i < x.size(); ++i) point[state_var(static_cast<std::uint32_t>(i) + 1)] = x[i];
    double m = std::numeric_limits<double>::infinity();
    for (const auto& h : constraints) m = std::min(m, h.evaluate(point));
    return m;
  }

  bool contains(const std::vector<double>& x) const { return min_constraint(x) >= 0.0; }

  /// Bounding box for rejection sampling; boxes know theirs, other sets must
  /// be given one explicitly.
  std::pair<std::vector<double>, std::vector<double>> bounding_box() const {
    if (!box_lo) throw std::invalid_argument("set has no bounding box; construct via box_set");
    return {*box_lo, *box_hi};
  }
};

/// Axis-aligned box as a semialgebraic set. Default description is the 2n
/// linear faces; `quadratic` selects the equivalent per-dimension quadratics
/// (x_i - lo_i)(hi_i - x_i) >= 0.
inline SemialgebraicSet box_set(const std::vector<double>& lo, const std::vector<double>& hi,
                                bool quadratic = false) {
  if (lo.size() != hi.size() || lo.empty())
    throw std::invalid_argument("box_set: lo/hi dimension mismatch");
  SemialgebraicSet s;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i]))
      throw std::invalid_argument("box_set: need lo < hi in dimension " + std::to_string(i + 1));
    const Polynomial xi = Polynomial::var(state_var(static_cast<std::uint32_t>(i) + 1));
    if (quadratic) {
      s.constraints.push_back((xi - lo[i]) * (hi[i] - xi));
    } else {
      s.constraints.push_back(xi - lo[i]);
      s.constraints.push_back(hi[i] - xi);
    }
  }
  s.box_lo = lo;
  s.box_hi = hi;
  return s;
}

/// Same box, input variables (u1..um) instead of states.
inline SemialgebraicSet input_box_set(const std::vector<double>& lo,
                                      const std::vector<double>& hi) {
  SemialgebraicSet s;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw std::invalid_argument("input_box_set: need lo < hi");
    const Polynomial ui = Polynomial::var(input_var(static_cast<std::uint32_t>(i) + 1));
    s.constraints.push_back(ui - lo[i]);
    s.constraints.push_back(hi[i] - ui);
  }
  s.box_lo = lo;
  s.box_hi = hi;
  return s;
}

/// Union of basic semialgebraic pieces; membership = membership in any piece.
struct RegionUnion {
  std::vector<SemialgebraicSet> pieces;

  bool contains(const std::vector<double>& x) const {
    for (const auto& p : pieces)
      if (p.contains(x)) return true;
    return false;
  }
  bool empty() const { return pieces.empty(); }
};

/// Polynomial feedback controller, fixed (numeric) or templated with scalar
/// parameters to be searched over.
struct Controller {
  enum class Mode { Fixed, Template };

  Mode mode = Mode::Fixed;
  bool time_varying = false;
  /// Fixed mode: policies[step][j] over x; a single step means time-invariant.
  std::vector<std::vector<Polynomial>> policies;
  /// Template mode: m parametric policies over x with local parameter ids 0..param_count-1.
  std::vector<ParametricPolynomial> template_policies;
  std::uint32_t param_count = 0;
  /// Admissible input set U over u1..um.
  SemialgebraicSet admissible;

  static Controller zero(std::uint32_t m, SemialgebraicSet u_set) {
    Controller c;
    c.mode = Mode::Fixed;
    c.policies = {std::vector<Polynomial>(m, Polynomial(0.0))};
    c.admissible = std::move(u_set);
    return c;
  }

  /// pi(x) = -K x (row-major K, m x n).
  static Controller linear_gain(const std::vector<std::vector<double>>& K,
                                SemialgebraicSet u_set) {
    Controller c;
    c.mode = Mode::Fixed;
    std::vector<Polynomial> pols;
    for (const auto& row : K) {
      Polynomial p;
      for (std::size_t j = 0; j < row.size(); ++j)
        p = p + Polynomial::var(state_var(static_cast<std::uint32_t>(j) + 1)) * (-row[j]);
      pols.push_back(p);
    }
    c.policies = {pols};
    c.admissible = std::move(u_set);
    return c;
  }

  /// pi(x) = -K(x - x_ref) + u_ff, affine feedback about a reference point.
  static Controller affine_gain(const std::vector<std::vector<double>>& K,
                                const std::vector<double>& x_ref,
                                const std::vector<double>& u_ff, SemialgebraicSet u_set) {
    Controller c;
    c.mode = Mode::Fixed;
    std::vector<Polynomial> pols;
    for (std::size_t r = 0; r < K.size(); ++r) {
      Polynomial p = u_ff[r];
      for (std::size_t j = 0; j < K[r].size(); ++j)
        p = p + (Polynomial::var(state_var(static_cast<std::uint32_t>(j) + 1)) - x_ref[j]) *
                    (-K[r][j]);
      pols.push_back(p);
    }
    c.policies = {pols};
    c.admissible = std::move(u_set);
    return c;
  }

  /// pi(x) = -K x with every K entry a search parameter (row-major ids).
  static Controller linear_template(std::uint32_t m, std::uint32_t n, SemialgebraicSet u_set) {
    Controller c;
    c.mode = Mode::Template;
    c.param_count = m * n;
    for (std::uint32_t r = 0; r < m; ++r) {
      ParametricPolynomial p;
      for (std::uint32_t j = 0; j < n; ++j)
        p.add_term(Monomial::var(state_var(j + 1)),
                   AffineForm::decision(static_cast<DecisionId>(r * n + j), -1.0));
      c.template_policies.push_back(p);
    }
    c.admissible = std::move(u_set);
    return c;
  }

  /// Instantiates a template with numeric parameter values.
  Controller instantiate(const std::vector<double>& params) const {
    if (mode != Mode::Template) throw std::logic_error("instantiate: controller is not a template");
    if (params.size() != param_count)
      throw std::invalid_argument("instantiate: expected " + std::to_string(param_count) +
                                  " parameters");
    Controller c;
    c.mode = Mode::Fixed;
    c.time_varying = false;
    std::vector<Polynomial> pols;
    for (const auto& tp : template_policies) pols.push_back(tp.substitute(params));
    c.policies = {pols};
    c.admissible = admissible;
    return c;
  }

  const std::vector<Polynomial>& policy_at(std::uint32_t step) const {
    if (mode != Mode::Fixed)
      throw std::logic_error("policy_at: template controller has no bound decision values");
    if (policies.empty()) throw std::logic_error("policy_at: empty controller");
    if (!time_varying || policies.size() == 1) return policies[0];
    return policies[std::min<std::size_t>(step, policies.size() - 1)];
  }
};

/// Discrete-time polynomial stochastic system x' = f(x, u, w).
struct StochasticSystem {
  std::uint32_t n = 0, m = 0;
  std::vector<Polynomial> dynamics;  // n components over (x, u, w)
  NoiseSpec noise;

  StochasticSystem() = default;
  StochasticSystem(std::uint32_t n_, std::uint32_t m_, std::vector<Polynomial> f, NoiseSpec w)
      : n(n_), m(m_), dynamics(std::move(f)), noise(std::move(w)) {
    if (dynamics.size() != n) throw std::invalid_argument("StochasticSystem: need n dynamics");
    for (const auto& p : dynamics)
      for (VarId v : p.variables()) {
        const auto idx = var_index(v);
        const bool ok = (var_kind(v) == VarKind::State && idx <= n) ||
                        (var_kind(v) == VarKind::Input && idx <= m) ||
                        (var_kind(v) == VarKind::Noise && idx <= noise.dim());
        if (!ok)
          throw std::invalid_argument("StochasticSystem: dynamics use undeclared variable " +
                                      var_name(v));
      }
  }

  /// x' = A x + c + w (w broadcast by index).
  static StochasticSystem linear(const std::vector<std::vector<double>>& A,
                                 const std::vector<double>& c, NoiseSpec w,
                                 std::uint32_t inputs = 0, bool additive_input = false) {
    const auto n = static_cast<std::uint32_t>(A.size());
    std::vector<Polynomial> f;
    for (std::uint32_t i = 0; i < n; ++i) {
      Polynomial p = c[i];
      for (std::uint32_t j = 0; j < n; ++j)
        p = p + Polynomial::var(state_var(j + 1)) * A[i][j];
      if (i < w.dim()) p = p + Polynomial::var(noise_var(i + 1));
      if (additive_input && i < inputs) p = p + Polynomial::var(input_var(i + 1));
      f.push_back(p);
    }
    return StochasticSystem(n, inputs, std::move(f), std::move(w));
  }
};

/// Forward-Euler discretization A_d = I + dt * A.
inline std::vector<std::vector<double>> euler_discretize(
    const std::vector<std::vector<double>>& A, double dt) {
  auto Ad = A;
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < A.size(); ++j) Ad[i][j] = (i == j ? 1.0 : 0.0) + dt * A[i][j];
  return Ad;
}

/// Substitutes u = pi_step(x) into the dynamics; result is over (x, w) only.
inline std::vector<Polynomial> closed_loop(const StochasticSystem& system,
                                           const Controller& controller, std::uint32_t step = 0) {
  const auto& policy = controller.policy_at(step);
  std::map<VarId, Polynomial> sub;
  for (std::uint32_t i = 1; i <= system.n; ++i) sub[state_var(i)] = Polynomial::var(state_var(i));
  for (std::uint32_t i = 1; i <= system.noise.dim(); ++i)
    sub[noise_var(i)] = Polynomial::var(noise_var(i));
  for (std::uint32_t j = 1; j <= system.m; ++j) {
    if (j > policy.size()) throw std::invalid_argument("closed_loop: controller dimension < m");
    sub[input_var(j)] = policy[j - 1];
  }
  std::vector<Polynomial> out;
  out.reserve(system.n);
  for (const auto& f : system.dynamics) out.push_back(f.compose(sub));
  return out;
}

/// Horizon: a step count or infinite.
struct Horizon {
  bool infinite = false;
  std::uint32_t steps = 0;

  static Horizon finite(std::uint32_t h) { return {false, h}; }
  static Horizon inf() { return {true, 0}; }
};

namespace detail {

/// Deterministic low-discrepancy points in a box (Kronecker sequence).
inline std::vector<std::vector<double>> lattice_points(const std::vector<double>& lo,
                                                       const std::vector<double>& hi,
                                                       std::size_t count) {
  // Alphas from the generalized golden ratio; good equidistribution up to 3-4 dims.
  static const double alphas[] = {0.6180339887498949, 0.7548776662466927, 0.8191725133961645,
                                  0.8566748838545029};
  std::vector<std::vector<double>> pts;
  pts.reserve(count);
  const std::size_t dim = lo.size();
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> p(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      double frac = std::fmod((static_cast<double>(k) + 0.5) * alphas[d % 4] +
                                  0.318 * static_cast<double>(d),
                              1.0);
      p[d] = lo[d] + (hi[d] - lo[d]) * frac;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

}  // namespace detail

/// Reach-avoid problem data. `safe_minus_reach` is carried explicitly as a
/// union of basic pieces (the set difference is generally not basic), as is
/// the unsafe region.
struct ReachAvoidSpec {
  SemialgebraicSet safe;     // X_s
  SemialgebraicSet initial;  // X_0
  SemialgebraicSet reach;    // X_r
  RegionUnion unsafe;        // X_u pieces
  RegionUnion safe_minus_reach;
  Horizon horizon;

  ReachAvoidSpec() = default;
  ReachAvoidSpec(SemialgebraicSet safe_, SemialgebraicSet initial_, SemialgebraicSet reach_,
                 RegionUnion unsafe_, RegionUnion sbar_, Horizon h)
      : safe(std::move(safe_)),
        initial(std::move(initial_)),
        reach(std::move(reach_)),
        unsafe(std::move(unsafe_)),
        safe_minus_reach(std::move(sbar_)),
        horizon(h) {
    check_inclusions();
  }

 private:
  void check_inclusions() const {
    // X_0 and X_r must lie inside X_s; unsafe pieces must not meet the reach
    // set. Dense deterministic sampling, zero tolerance.
    auto check_subset = [&](const SemialgebraicSet& inner, const char* name) {
      if (!inner.is_box()) return;  // only boxes carry a sampling domain
      auto [lo, hi] = inner.bounding_box();
      for (const auto& p : detail::lattice_points(lo, hi, 512))
        if (!safe.contains(p))
          throw std::invalid_argument(std::string("ReachAvoidSpec: ") + name +
                                      " is not contained in the safe set");
    };
    check_subset(initial, "initial set");
    check_subset(reach, "reach set");
    for (const auto& piece : unsafe.pieces) {
      if (!piece.is_box()) continue;
      auto [lo, hi] = piece.bounding_box();
      for (const auto& p : detail::lattice_points(lo, hi, 256))
        if (piece.contains(p) && reach.contains(p) && reach.min_constraint(p) > 0)
          throw std::invalid_argument(
              "ReachAvoidSpec: an unsafe piece overlaps the reach set interior");
    }
  }
};

}  // namespace reachcert
