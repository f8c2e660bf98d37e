#pragma once

// Reach-avoid certificate synthesis: builds and solves the SOS programs for
// time-varying (finite and unbounded horizon) and time-invariant (finite,
// infinite, strict) certificates, returning solved certificates with sound
// probability lower bounds.
//
// Certificates are compiled in coordinates rescaled so the safe box maps to
// [-1,1]^n (SDP conditioning); everything user-facing is composed back to
// original coordinates.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reachcert/ipm.hpp"
#include "reachcert/model.hpp"
#include "reachcert/sos.hpp"

namespace reachcert {

enum class CertificateKind { TvFinite, TvUnbounded, TiFinite, TiInfinite, TiStrict };

inline const char* to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::TvFinite: return "tv";
    case CertificateKind::TvUnbounded: return "tv-inf";
    case CertificateKind::TiFinite: return "ti";
    case CertificateKind::TiInfinite: return "ti-inf";
    default: return "ti-strict";
  }
}

inline CertificateKind certificate_kind_from_string(const std::string& s) {
  if (s == "tv") return CertificateKind::TvFinite;
  if (s == "tv-inf") return CertificateKind::TvUnbounded;
  if (s == "ti") return CertificateKind::TiFinite;
  if (s == "ti-inf") return CertificateKind::TiInfinite;
  if (s == "ti-strict") return CertificateKind::TiStrict;
  throw std::invalid_argument("unknown certificate kind '" + s +
                              "' (expected tv, tv-inf, ti, ti-inf, ti-strict)");
}

struct CertificateOptions {
  std::uint32_t degree = 4;
  /// Per-step degree override for time-varying kinds (index = remaining steps).
  std::vector<std::uint32_t> per_step_degrees;
  /// Retry ladder: on infeasibility the degree is raised by 2 up to this cap.
  std::uint32_t degree_cap = 12;
  /// Global nonnegativity of R: plain SOS membership (default) or nonnegativity
  /// on X = safe/reach/unsafe pieces via Putinar multipliers.
  bool relaxed_nonneg = false;
  bool quadratic_boxes = true;
  /// Strict (baseline-equivalent) variant: required expectation decrease.
  double strict_epsilon = 1e-3;
  /// Regions where R <= 1 + alpha is additionally asserted. Used to cover
  /// "limbo" regions that receive one-step expectation mass but carry no
  /// other constraint: without a cap the program is unbounded through them
  /// (the certificate can grow arbitrarily there and inflate gamma). A level
  /// cap only shrinks the feasible set, so every certificate produced under
  /// it is feasible for the uncapped program with the same scalars.
  RegionUnion level_cap_pieces;
  SdpSettings sdp;
  std::string backend = "embedded";
};

/// Affine state rescaling x = center + half .* y used during compilation.
struct ScalingMap {
  std::vector<double> center, half;

  static ScalingMap identity(std::uint32_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  }
  static ScalingMap from_box(const std::vector<double>& lo, const std::vector<double>& hi) {
    ScalingMap m;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      m.center.push_back(0.5 * (lo[i] + hi[i]));
      m.half.push_back(0.5 * (hi[i] - lo[i]));
    }
    return m;
  }

  std::uint32_t dim() const { return static_cast<std::uint32_t>(center.size()); }

  /// p(y) -> p((x - c)/h) in original coordinates.
  Polynomial to_original(const Polynomial& p_scaled) const {
    std::map<VarId, Polynomial> sub;
    for (std::uint32_t i = 0; i < dim(); ++i)
      sub[state_var(i + 1)] =
          (Polynomial::var(state_var(i + 1)) - center[i]) * (1.0 / half[i]);
    for (VarId v : p_scaled.variables())
      if (var_kind(v) != VarKind::State) sub[v] = Polynomial::var(v);
    return p_scaled.compose(sub);
  }

  /// p(x) -> p(c + h y) in scaled coordinates.
  Polynomial to_scaled(const Polynomial& p_orig) const {
    std::map<VarId, Polynomial> sub;
    for (std::uint32_t i = 0; i < dim(); ++i)
      sub[state_var(i + 1)] = Polynomial::var(state_var(i + 1)) * half[i] + center[i];
    for (VarId v : p_orig.variables())
      if (var_kind(v) != VarKind::State) sub[v] = Polynomial::var(v);
    return p_orig.compose(sub);
  }

  SemialgebraicSet map_set(const SemialgebraicSet& s) const {
    SemialgebraicSet out;
    if (s.is_box()) {
      std::vector<double> lo(dim()), hi(dim());
      for (std::uint32_t i = 0; i < dim(); ++i) {
        lo[i] = ((*s.box_lo)[i] - center[i]) / half[i];
        hi[i] = ((*s.box_hi)[i] - center[i]) / half[i];
      }
      return box_set(lo, hi);
    }
    for (const auto& h : s.constraints) out.constraints.push_back(to_scaled(h));
    return out;
  }

  RegionUnion map_region(const RegionUnion& r) const {
    RegionUnion out;
    for (const auto& p : r.pieces) out.pieces.push_back(map_set(p));
    return out;
  }

  /// Closed-loop dynamics in scaled coordinates: y' = (f(c + h y, w) - c)/h.
  std::vector<Polynomial> map_dynamics(const std::vector<Polynomial>& f_cl) const {
    std::vector<Polynomial> out;
    for (std::uint32_t i = 0; i < f_cl.size(); ++i)
      out.push_back((to_scaled(f_cl[i]) - center[i]) * (1.0 / half[i]));
    return out;
  }
};

/// One formulation inequality, in original coordinates: expr(x) >= 0 on domain.
struct ConstraintDescriptor {
  std::string name;
  Polynomial expr;
  SemialgebraicSet domain;
  bool scales_with_horizon = false;  // expectation-step conditions compound over time
};

/// Solved Gram data retained for independent PSD/reconstruction re-checks.
struct SolvedGram {
  std::string name;
  Eigen::MatrixXd Q;
  double reconstruction_error = 0.0;
};

struct Certificate {
  CertificateKind kind = CertificateKind::TiInfinite;
  Horizon horizon;
  std::uint32_t varying_steps = 0;  // k for TvUnbounded
  std::uint32_t degree = 0;
  ScalingMap scaling;

  /// TV kinds: R[i] is the certificate with i remaining steps (0..H or 0..k+1).
  /// TI kinds: single entry. Original coordinates.
  std::vector<Polynomial> R;
  double gamma = 0.0;
  std::vector<double> alphas;
  std::vector<double> betas;

  SdpStatus status = SdpStatus::NumericalTrouble;
  std::string solver_message;
  int iterations = 0;
  double solve_seconds = 0.0;
  double max_residual = 0.0;
  double min_gram_eigenvalue = 0.0;
  std::vector<std::pair<std::uint32_t, SdpStatus>> attempts;  // degree ladder

  std::vector<ConstraintDescriptor> constraints;
  std::vector<SolvedGram> grams;
  std::vector<std::pair<std::string, Polynomial>> multipliers;

  bool optimal() const { return status == SdpStatus::Optimal; }
};

/// Lower-bound formula per kind; requires Optimal status.
inline double bound_of(const Certificate& c) {
  if (!c.optimal()) throw std::logic_error("bound_of: certificate status is not Optimal");
  double sum_beta = 0.0;
  for (double b : c.betas) sum_beta += b;
  switch (c.kind) {
    case CertificateKind::TvFinite:
      return c.gamma - (c.alphas.at(c.horizon.steps) + sum_beta);
    case CertificateKind::TvUnbounded:
      return c.gamma - (c.alphas.at(c.varying_steps) + sum_beta);
    case CertificateKind::TiFinite:
      return c.gamma - c.alphas.at(0) - static_cast<double>(c.horizon.steps) * c.betas.at(0);
    case CertificateKind::TiInfinite:
      return c.gamma - c.alphas.at(0);
    case CertificateKind::TiStrict:
      return c.gamma;
  }
  return 0.0;
}

inline double clamp01(double v) { return std::max(0.0, std::min(1.0, v)); }

namespace detail {

/// Shared machinery for one synthesis attempt at a fixed degree.
class ProgramBuilder {
 public:
  ProgramBuilder(const StochasticSystem& system, const Controller& controller,
                 const ReachAvoidSpec& spec, const CertificateOptions& opt)
      : system_(system), controller_(controller), spec_(spec), opt_(opt), sos_(builder_) {
    if (controller.mode != Controller::Mode::Fixed)
      throw std::invalid_argument("certificate synthesis requires a fixed (numeric) controller");
    scaling_ = spec.safe.is_box()
                   ? ScalingMap::from_box(*spec.safe.box_lo, *spec.safe.box_hi)
                   : ScalingMap::identity(system.n);
    for (std::uint32_t i = 1; i <= system.n; ++i) vars_.push_back(state_var(i));
    reach_s_ = scaling_.map_set(spec.reach);
    initial_s_ = scaling_.map_set(spec.initial);
    unsafe_s_ = scaling_.map_region(spec.unsafe);
    sbar_s_ = scaling_.map_region(spec.safe_minus_reach);
    safe_s_ = scaling_.map_set(spec.safe);
    caps_s_ = scaling_.map_region(opt.level_cap_pieces);
  }

  /// Expected next-step certificate E[Rprev(y') | y] for the controller at
  /// `time_step`, all in scaled coordinates.
  ParametricPolynomial expect_step(const ParametricPolynomial& Rprev, std::uint32_t time_step) {
    auto it = dyn_cache_.find(time_step);
    if (it == dyn_cache_.end()) {
      const auto cl = closed_loop(system_, controller_, time_step);
      it = dyn_cache_.emplace(time_step, scaling_.map_dynamics(cl)).first;
    }
    std::map<VarId, Polynomial> sub;
    for (std::uint32_t i = 0; i < system_.n; ++i) sub[state_var(i + 1)] = it->second[i];
    return expect_over_noise(Rprev.compose(sub), system_.noise);
  }

  /// Fresh certificate polynomial at a step: SOS by default, or free
  /// coefficients + nonnegativity on the safe/unsafe cover when relaxed.
  ParametricPolynomial fresh_certificate(std::uint32_t degree, const std::string& name) {
    if (!opt_.relaxed_nonneg) return sos_.fresh_sos(vars_, degree, name);
    ParametricPolynomial R = sos_.fresh_free_poly(vars_, degree, name);
    sos_.assert_nonneg_on_set(R, safe_s_, degree, name + "_on_safe", opt_.quadratic_boxes);
    for (std::size_t p = 0; p < unsafe_s_.pieces.size(); ++p)
      sos_.assert_nonneg_on_set(R, unsafe_s_.pieces[p], degree,
                                name + "_on_u" + std::to_string(p), opt_.quadratic_boxes);
    return R;
  }

  void require_nonneg_on_set(const ParametricPolynomial& e, const SemialgebraicSet& s,
                             std::uint32_t degree, const std::string& name) {
    const std::uint32_t budget = std::max(degree, e.degree());
    sos_.assert_nonneg_on_set(e, s, (budget + 1) & ~1u, name, opt_.quadratic_boxes);
  }
  void require_nonneg_on_union(const ParametricPolynomial& e, const RegionUnion& r,
                               std::uint32_t degree, const std::string& name) {
    for (std::size_t p = 0; p < r.pieces.size(); ++p)
      require_nonneg_on_set(e, r.pieces[p], degree, name + "_p" + std::to_string(p));
  }

  SdpBuilder& builder() { return builder_; }
  SosCompiler& sos() { return sos_; }
  const ScalingMap& scaling() const { return scaling_; }
  const std::vector<VarId>& vars() const { return vars_; }
  const SemialgebraicSet& reach_s() const { return reach_s_; }
  const SemialgebraicSet& initial_s() const { return initial_s_; }
  const RegionUnion& unsafe_s() const { return unsafe_s_; }
  const RegionUnion& sbar_s() const { return sbar_s_; }
  const SemialgebraicSet& safe_s() const { return safe_s_; }
  const RegionUnion& caps_s() const { return caps_s_; }

  std::uint32_t step_degree(std::uint32_t i, std::uint32_t base) const {
    if (i < opt_.per_step_degrees.size()) return opt_.per_step_degrees[i];
    return base;
  }

 private:
  const StochasticSystem& system_;
  const Controller& controller_;
  const ReachAvoidSpec& spec_;
  const CertificateOptions& opt_;
  SdpBuilder builder_;
  SosCompiler sos_;
  ScalingMap scaling_;
  std::vector<VarId> vars_;
  SemialgebraicSet reach_s_, initial_s_, safe_s_;
  RegionUnion unsafe_s_, sbar_s_, caps_s_;
  std::map<std::uint32_t, std::vector<Polynomial>> dyn_cache_;
};

struct AttemptResult {
  SdpSolution solution;
  std::vector<ParametricPolynomial> R_scaled;
  std::vector<DecisionId> alpha_cols, beta_cols;
  DecisionId gamma_col = -1;
  std::vector<SosRecord> records;
  ScalingMap scaling;
};

}  // namespace detail

class CertificateSynthesizer {
 public:
  CertificateSynthesizer(const StochasticSystem& system, const Controller& controller,
                         const ReachAvoidSpec& spec, CertificateOptions opt = {})
      : system_(system), controller_(controller), spec_(spec), opt_(std::move(opt)) {}

  /// Theorem-style time-varying certificate over a finite horizon H.
  Certificate synth_tv_finite() {
    if (spec_.horizon.infinite)
      throw std::invalid_argument("synth_tv_finite: spec horizon must be finite");
    return run_ladder(CertificateKind::TvFinite);
  }

  /// Unbounded-horizon time-varying certificate with k varying steps.
  Certificate synth_tv_unbounded(std::uint32_t k) {
    if (!spec_.horizon.infinite)
      throw std::invalid_argument("synth_tv_unbounded: spec horizon must be infinite");
    if (k < 1) throw std::invalid_argument("synth_tv_unbounded: k must be >= 1");
    varying_steps_ = k;
    return run_ladder(CertificateKind::TvUnbounded);
  }

  /// Single time-invariant certificate; infinite pins beta = 0; strict builds
  /// the baseline-equivalent supermartingale variant (infinite only).
  Certificate synth_ti(bool infinite, bool strict = false) {
    if (strict && !infinite)
      throw std::invalid_argument("synth_ti: the strict variant is infinite-horizon only");
    if (infinite != spec_.horizon.infinite)
      throw std::invalid_argument("synth_ti: horizon flag does not match the spec horizon");
    if (strict) return strict_bisection();
    return run_ladder(infinite ? CertificateKind::TiInfinite : CertificateKind::TiFinite);
  }

  Certificate synthesize(CertificateKind kind, std::uint32_t k = 0) {
    switch (kind) {
      case CertificateKind::TvFinite: return synth_tv_finite();
      case CertificateKind::TvUnbounded: return synth_tv_unbounded(k ? k : 5);
      case CertificateKind::TiFinite: return synth_ti(false);
      case CertificateKind::TiInfinite: return synth_ti(true);
      case CertificateKind::TiStrict: return synth_ti(true, true);
    }
    throw std::logic_error("unreachable");
  }

 private:
  const StochasticSystem& system_;
  const Controller& controller_;
  const ReachAvoidSpec& spec_;
  CertificateOptions opt_;
  std::uint32_t varying_steps_ = 5;

  /// Strict (baseline-equivalent) variant via the paper's correspondence
  /// R = 1 - (1 - gamma) V: V in SOS with V <= 1 on X_0, V >= 1/(1 - gamma)
  /// on the unsafe pieces, and the expectation decrease on safe-minus-reach
  /// (exactly "alpha = 0" in R-coordinates). The unsafe level is nonconvex in
  /// gamma, so gamma is found by bisection over feasibility problems; the
  /// required dynamic range 1 -> 1/(1 - gamma) under the supermartingale
  /// condition is what限 the baseline at modest values.
  Certificate strict_bisection() {
    const std::uint32_t degree = (opt_.degree + 1) & ~1u;
    double lo = 0.0, hi = 0.999;
    std::optional<Certificate> best;

    auto try_gamma = [&](double gamma) -> Certificate {
      detail::ProgramBuilder pb(system_, controller_, spec_, opt_);
      detail::AttemptResult ar;
      ar.scaling = pb.scaling();
      const double level = 1.0 / (1.0 - gamma);
      ParametricPolynomial V = pb.sos().fresh_sos(pb.vars(), degree, "V");
      pb.require_nonneg_on_set(ParametricPolynomial(1.0) - V, pb.initial_s(), degree,
                               "initial_level");
      pb.require_nonneg_on_union(V - ParametricPolynomial(level), pb.unsafe_s(), degree,
                                 "unsafe_level");
      pb.require_nonneg_on_union(
          V - pb.expect_step(V, 0) - ParametricPolynomial(opt_.strict_epsilon), pb.sbar_s(),
          degree, "decrease");
      pb.builder().set_objective(AffineForm(0.0), true);
      const SdpProblem problem = pb.builder().build();
      ar.solution = get_backend(opt_.backend)->solve(problem, opt_.sdp);
      ar.records = pb.sos().records();
      ar.R_scaled = {ParametricPolynomial(1.0) - V * (1.0 - gamma)};
      Certificate cert = extract(CertificateKind::TiStrict, degree, ar, pb);
      cert.gamma = gamma;
      cert.alphas = {0.0};
      cert.betas = {0.0};
      return cert;
    };

    // gamma = 0 (level 1) is the cheapest feasibility query; if even that
    // fails the variant is infeasible at this degree.
    Certificate probe = try_gamma(0.0);
    probe.attempts.emplace_back(degree, probe.status);
    if (!probe.optimal()) return probe;
    best = probe;
    for (int it = 0; it < 16; ++it) {
      const double mid = 0.5 * (lo + hi);
      Certificate cert = try_gamma(mid);
      if (cert.optimal()) {
        lo = mid;
        best = cert;
      } else {
        hi = mid;
      }
      if (hi - lo < 5e-4) break;
    }
    best->attempts.emplace_back(degree, best->status);
    // rebuild the descriptor list against the final gamma
    return *best;
  }

  Certificate run_ladder(CertificateKind kind) {
    std::vector<std::pair<std::uint32_t, SdpStatus>> attempts;
    std::uint32_t degree = (opt_.degree + 1) & ~1u;
    while (true) {
      Certificate cert = attempt(kind, degree);
      attempts.emplace_back(degree, cert.status);
      cert.attempts = attempts;
      if (cert.status != SdpStatus::Infeasible || degree + 2 > opt_.degree_cap) {
        if (cert.status == SdpStatus::Infeasible)
          cert.solver_message =
              "infeasible up to degree " + std::to_string(degree) +
              "; consider raising the degree cap";
        return cert;
      }
      degree += 2;
    }
  }

  Certificate attempt(CertificateKind kind, std::uint32_t degree) {
    detail::ProgramBuilder pb(system_, controller_, spec_, opt_);
    detail::AttemptResult ar;
    ar.scaling = pb.scaling();

    const std::uint32_t H = spec_.horizon.steps;
    const std::uint32_t k = varying_steps_;

    // The feasible set carries the ray (R + t, gamma + t, alpha + t) with a
    // constant objective, which elongates the central path badly. A tiny
    // alpha penalty picks the minimum-alpha representative and hard caps
    // gamma, alpha <= 5 bound the ray; neither changes the optimal
    // gamma - alpha value (any valid bound is <= 1, so a representative with
    // gamma <= 1 + alpha_min <= 5 always exists). The reported bound is
    // computed from the (gamma, alpha, beta) formula, never from the
    // perturbed SDP objective.
    const double kAlphaPin = 1e-5;
    const double kScalarCap = 2.0;
    auto cap_scalar = [&](DecisionId col, const std::string& name) {
      const DecisionId slack = pb.builder().add_scalar(name + "_cap");
      pb.builder().add_equality(AffineForm::decision(col) + AffineForm::decision(slack) -
                                AffineForm(kScalarCap));
    };
    AffineForm objective;
    switch (kind) {
      case CertificateKind::TvFinite: {
        // R(.,i) for i = 0..H (i = remaining steps)
        std::vector<ParametricPolynomial> R;
        std::vector<DecisionId> alpha, beta;
        for (std::uint32_t i = 0; i <= H; ++i) {
          alpha.push_back(pb.builder().add_scalar("alpha" + std::to_string(i)));
          R.push_back(pb.fresh_certificate(pb.step_degree(i, degree), "R" + std::to_string(i)));
        }
        for (std::uint32_t i = 1; i <= H; ++i)
          beta.push_back(pb.builder().add_scalar("beta" + std::to_string(i)));

        for (std::uint32_t i = 0; i <= H; ++i) {
          const ParametricPolynomial Ri = R[i];
          const AffineForm ai = AffineForm::decision(alpha[i]);
          // R(.,i) <= 1 + alpha_i on the reach set
          pb.require_nonneg_on_set(ParametricPolynomial(1.0) + ParametricPolynomial(ai) - Ri,
                                   pb.reach_s(), degree, "reach" + std::to_string(i));
          // R(.,i) <= alpha_i on each unsafe piece
          pb.require_nonneg_on_union(ParametricPolynomial(ai) - Ri, pb.unsafe_s(), degree,
                                     "unsafe" + std::to_string(i));
          // R(.,i) <= 1 + alpha_i on the level-cap pieces
          if (!pb.caps_s().empty())
            pb.require_nonneg_on_union(ParametricPolynomial(1.0) + ParametricPolynomial(ai) - Ri,
                                       pb.caps_s(), degree, "cap" + std::to_string(i));
        }
        // R(.,0) <= alpha_0 on safe-minus-reach
        pb.require_nonneg_on_union(
            ParametricPolynomial(AffineForm::decision(alpha[0])) - R[0], pb.sbar_s(), degree,
            "init_step");
        // R(.,i) <= E[R(.,i-1) o f] - alpha_{i-1} + alpha_i + beta_i
        for (std::uint32_t i = 1; i <= H; ++i) {
          ParametricPolynomial e = pb.expect_step(R[i - 1], H - i) - R[i];
          e = e + ParametricPolynomial(AffineForm::decision(alpha[i]) -
                                       AffineForm::decision(alpha[i - 1]) +
                                       AffineForm::decision(beta[i - 1]));
          pb.require_nonneg_on_union(e, pb.sbar_s(), degree, "exp" + std::to_string(i));
        }
        // R(.,H) >= gamma on the initial set
        ar.gamma_col = pb.builder().add_scalar("gamma");
        pb.require_nonneg_on_set(
            R[H] - ParametricPolynomial(AffineForm::decision(ar.gamma_col)), pb.initial_s(),
            degree, "initial");

        objective = AffineForm::decision(ar.gamma_col) - AffineForm::decision(alpha[H]);
        for (DecisionId b : beta) objective = objective - AffineForm::decision(b);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          objective = objective - AffineForm::decision(alpha[i], kAlphaPin);
          cap_scalar(alpha[i], "alpha" + std::to_string(i));
        }
        cap_scalar(ar.gamma_col, "gamma");
        ar.R_scaled = R;
        ar.alpha_cols = alpha;
        ar.beta_cols = beta;
        break;
      }

      case CertificateKind::TvUnbounded: {
        // R(.,i) for i = 0..k+1; steady-state condition links k+1 to k.
        std::vector<ParametricPolynomial> R;
        std::vector<DecisionId> alpha, beta;
        for (std::uint32_t i = 0; i <= k + 1; ++i) {
          alpha.push_back(pb.builder().add_scalar("alpha" + std::to_string(i)));
          R.push_back(pb.fresh_certificate(pb.step_degree(i, degree), "R" + std::to_string(i)));
        }
        for (std::uint32_t i = 1; i <= k; ++i)
          beta.push_back(pb.builder().add_scalar("beta" + std::to_string(i)));

        for (std::uint32_t i = 0; i <= k + 1; ++i) {
          const AffineForm ai = AffineForm::decision(alpha[i]);
          pb.require_nonneg_on_set(
              ParametricPolynomial(1.0) + ParametricPolynomial(ai) - R[i], pb.reach_s(), degree,
              "reach" + std::to_string(i));
          pb.require_nonneg_on_union(ParametricPolynomial(ai) - R[i], pb.unsafe_s(), degree,
                                     "unsafe" + std::to_string(i));
          if (!pb.caps_s().empty())
            pb.require_nonneg_on_union(ParametricPolynomial(1.0) + ParametricPolynomial(ai) - R[i],
                                       pb.caps_s(), degree, "cap" + std::to_string(i));
        }
        pb.require_nonneg_on_union(
            ParametricPolynomial(AffineForm::decision(alpha[0])) - R[0], pb.sbar_s(), degree,
            "init_step");
        for (std::uint32_t i = 1; i <= k; ++i) {
          ParametricPolynomial e = pb.expect_step(R[i - 1], 0) - R[i];
          e = e + ParametricPolynomial(AffineForm::decision(alpha[i]) -
                                       AffineForm::decision(alpha[i - 1]) +
                                       AffineForm::decision(beta[i - 1]));
          pb.require_nonneg_on_union(e, pb.sbar_s(), degree, "exp" + std::to_string(i));
        }
        // steady state: R(.,k+1) <= E[R(.,k) o f] with no slack
        pb.require_nonneg_on_union(pb.expect_step(R[k], 0) - R[k + 1], pb.sbar_s(), degree,
                                   "steady");
        ar.gamma_col = pb.builder().add_scalar("gamma");
        pb.require_nonneg_on_set(
            R[k + 1] - ParametricPolynomial(AffineForm::decision(ar.gamma_col)),
            pb.initial_s(), degree, "initial");

        objective = AffineForm::decision(ar.gamma_col) - AffineForm::decision(alpha[k]);
        for (DecisionId b : beta) objective = objective - AffineForm::decision(b);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          objective = objective - AffineForm::decision(alpha[i], kAlphaPin);
          cap_scalar(alpha[i], "alpha" + std::to_string(i));
        }
        cap_scalar(ar.gamma_col, "gamma");
        ar.R_scaled = R;
        ar.alpha_cols = alpha;
        ar.beta_cols = beta;
        break;
      }

      case CertificateKind::TiFinite:
      case CertificateKind::TiInfinite: {
        const bool infinite = (kind == CertificateKind::TiInfinite);
        const DecisionId alpha = pb.builder().add_scalar("alpha");
        ParametricPolynomial R = pb.fresh_certificate(degree, "R");
        DecisionId beta = -1;
        if (!infinite) beta = pb.builder().add_scalar("beta");

        pb.require_nonneg_on_set(ParametricPolynomial(1.0) +
                                     ParametricPolynomial(AffineForm::decision(alpha)) - R,
                                 pb.reach_s(), degree, "reach");
        pb.require_nonneg_on_union(ParametricPolynomial(AffineForm::decision(alpha)) - R,
                                   pb.unsafe_s(), degree, "unsafe");
        if (!pb.caps_s().empty())
          pb.require_nonneg_on_union(ParametricPolynomial(1.0) +
                                         ParametricPolynomial(AffineForm::decision(alpha)) - R,
                                     pb.caps_s(), degree, "cap");
        ParametricPolynomial e = pb.expect_step(R, 0) - R;
        if (!infinite) e = e + ParametricPolynomial(AffineForm::decision(beta));
        pb.require_nonneg_on_union(e, pb.sbar_s(), degree, "exp");
        ar.gamma_col = pb.builder().add_scalar("gamma");
        pb.require_nonneg_on_set(R - ParametricPolynomial(AffineForm::decision(ar.gamma_col)),
                                 pb.initial_s(), degree, "initial");

        objective = AffineForm::decision(ar.gamma_col) -
                    AffineForm::decision(alpha, 1.0 + kAlphaPin);
        if (!infinite)
          objective =
              objective - AffineForm::decision(beta) * static_cast<double>(H);
        cap_scalar(alpha, "alpha");
        cap_scalar(ar.gamma_col, "gamma");
        ar.R_scaled = {R};
        ar.alpha_cols = {alpha};
        if (!infinite) ar.beta_cols = {beta};
        break;
      }

      case CertificateKind::TiStrict:
        throw std::logic_error("strict variant is handled by bisection, not attempt()");
    }

    pb.builder().set_objective(objective, /*maximize=*/true);
    const SdpProblem problem = pb.builder().build();
    ar.solution = get_backend(opt_.backend)->solve(problem, opt_.sdp);
    ar.records = pb.sos().records();
    return extract(kind, degree, ar, pb);
  }

  Certificate extract(CertificateKind kind, std::uint32_t degree, detail::AttemptResult& ar,
                      detail::ProgramBuilder& pb) {
    Certificate cert;
    cert.kind = kind;
    cert.horizon = spec_.horizon;
    cert.varying_steps = (kind == CertificateKind::TvUnbounded) ? varying_steps_ : 0;
    cert.degree = degree;
    cert.scaling = ar.scaling;
    cert.status = ar.solution.status;
    cert.solver_message = ar.solution.message;
    cert.iterations = ar.solution.iterations;
    cert.solve_seconds = ar.solution.solve_seconds;
    cert.max_residual = ar.solution.max_equality_residual;
    cert.min_gram_eigenvalue = ar.solution.min_block_eigenvalue;
    if (cert.status != SdpStatus::Optimal && cert.status != SdpStatus::NumericalTrouble)
      return cert;

    const auto& vals = ar.solution.decision_values;
    cert.gamma = (ar.gamma_col >= 0) ? vals[static_cast<std::size_t>(ar.gamma_col)] : 0.0;
    for (DecisionId a : ar.alpha_cols) cert.alphas.push_back(vals[static_cast<std::size_t>(a)]);
    for (DecisionId b : ar.beta_cols) cert.betas.push_back(vals[static_cast<std::size_t>(b)]);
    if (kind == CertificateKind::TiStrict) {
      cert.alphas = {0.0};
      cert.betas = {0.0};
    }
    if (kind == CertificateKind::TiInfinite) cert.betas = {0.0};

    for (const auto& Rp : ar.R_scaled)
      cert.R.push_back(ar.scaling.to_original(Rp.substitute(vals)));

    // Gram blocks: PSD values + reconstruction errors for re-checking.
    for (const auto& rec : ar.records) {
      SolvedGram g;
      g.name = rec.name;
      g.Q = ar.solution.block_values[static_cast<std::size_t>(rec.block)];
      g.reconstruction_error = gram_reconstruction_error(rec, g.Q, vals);
      cert.grams.push_back(std::move(g));
      if (rec.name.find("_L") != std::string::npos)
        cert.multipliers.emplace_back(rec.name,
                                      ar.scaling.to_original(rec.subject.substitute(vals)));
    }

    build_descriptors(cert);
    return cert;
  }

  /// Formulation inequalities in original coordinates, recomputed through the
  /// unscaled closed loop (an independent path from the compiled program).
  void build_descriptors(Certificate& cert) {
    const auto& a = cert.alphas;
    const auto& b = cert.betas;
    auto expect_orig = [&](const Polynomial& Rprev, std::uint32_t time_step) {
      const auto cl = closed_loop(system_, controller_, time_step);
      std::map<VarId, Polynomial> sub;
      for (std::uint32_t i = 0; i < system_.n; ++i) sub[state_var(i + 1)] = cl[i];
      for (std::uint32_t i = 1; i <= system_.noise.dim(); ++i)
        sub[noise_var(i)] = Polynomial::var(noise_var(i));
      return expect_over_noise(Rprev.compose(sub), system_.noise);
    };
    auto add = [&](const std::string& name, const Polynomial& expr,
                   const SemialgebraicSet& dom, bool horizon_scaled = false) {
      cert.constraints.push_back({name, expr, dom, horizon_scaled});
    };
    auto add_union = [&](const std::string& name, const Polynomial& expr, const RegionUnion& r,
                         bool horizon_scaled = false) {
      for (std::size_t p = 0; p < r.pieces.size(); ++p)
        add(name + "_p" + std::to_string(p), expr, r.pieces[p], horizon_scaled);
    };

    switch (cert.kind) {
      case CertificateKind::TvFinite:
      case CertificateKind::TvUnbounded: {
        const std::uint32_t top = static_cast<std::uint32_t>(cert.R.size()) - 1;
        const std::uint32_t chain =
            (cert.kind == CertificateKind::TvFinite) ? top : cert.varying_steps;
        for (std::uint32_t i = 0; i <= top; ++i) {
          add("nonneg" + std::to_string(i), cert.R[i], spec_.safe);
          add("reach" + std::to_string(i), Polynomial(1.0 + a[i]) - cert.R[i], spec_.reach);
          add_union("unsafe" + std::to_string(i), Polynomial(a[i]) - cert.R[i], spec_.unsafe);
        }
        for (std::uint32_t i = 0; i <= top; ++i)
          if (!opt_.level_cap_pieces.empty())
            add_union("cap" + std::to_string(i), Polynomial(1.0 + a[i]) - cert.R[i],
                      opt_.level_cap_pieces);
        add_union("init_step", Polynomial(a[0]) - cert.R[0], spec_.safe_minus_reach);
        for (std::uint32_t i = 1; i <= chain; ++i) {
          const std::uint32_t time_step =
              (cert.kind == CertificateKind::TvFinite) ? cert.horizon.steps - i : 0;
          Polynomial e = expect_orig(cert.R[i - 1], time_step) - cert.R[i] +
                         Polynomial(a[i] - a[i - 1] + b[i - 1]);
          add_union("exp" + std::to_string(i), e, spec_.safe_minus_reach, true);
        }
        if (cert.kind == CertificateKind::TvUnbounded) {
          const std::uint32_t kk = cert.varying_steps;
          add_union("steady", expect_orig(cert.R[kk], 0) - cert.R[kk + 1],
                    spec_.safe_minus_reach, true);
        }
        add("initial", cert.R[top] - cert.gamma, spec_.initial);
        break;
      }
      case CertificateKind::TiFinite:
      case CertificateKind::TiInfinite: {
        const double beta = cert.betas.at(0);
        add("nonneg", cert.R[0], spec_.safe);
        add("reach", Polynomial(1.0 + a[0]) - cert.R[0], spec_.reach);
        add_union("unsafe", Polynomial(a[0]) - cert.R[0], spec_.unsafe);
        if (!opt_.level_cap_pieces.empty())
          add_union("cap", Polynomial(1.0 + a[0]) - cert.R[0], opt_.level_cap_pieces);
        add_union("exp", expect_orig(cert.R[0], 0) - cert.R[0] + beta, spec_.safe_minus_reach,
                  true);
        add("initial", cert.R[0] - cert.gamma, spec_.initial);
        break;
      }
      case CertificateKind::TiStrict: {
        const Polynomial V = Polynomial(1.0) - cert.R[0];
        add("level_nonneg", V, spec_.safe);
        add_union("unsafe_level", V - 1.0, spec_.unsafe);
        add_union("decrease", V - expect_orig(V, 0) - opt_.strict_epsilon,
                  spec_.safe_minus_reach, true);
        add("initial_level", Polynomial(1.0 - cert.gamma) - V, spec_.initial);
        break;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Serialization: documented structured text (JSON tree), all polynomials in
// the library's text grammar.
// ---------------------------------------------------------------------------

inline std::string certificate_to_json(const Certificate& c) {
  std::ostringstream os;
  os.precision(17);
  os << "{\n  \"kind\": \"" << to_string(c.kind) << "\",\n";
  if (c.horizon.infinite)
    os << "  \"horizon\": \"inf\",\n";
  else
    os << "  \"horizon\": " << c.horizon.steps << ",\n";
  if (c.kind == CertificateKind::TvUnbounded)
    os << "  \"varying_steps\": " << c.varying_steps << ",\n";
  os << "  \"degree\": " << c.degree << ",\n";
  os << "  \"status\": \"" << to_string(c.status) << "\",\n";
  os << "  \"gamma\": " << c.gamma << ",\n  \"alphas\": [";
  for (std::size_t i = 0; i < c.alphas.size(); ++i) os << (i ? ", " : "") << c.alphas[i];
  os << "],\n  \"betas\": [";
  for (std::size_t i = 0; i < c.betas.size(); ++i) os << (i ? ", " : "") << c.betas[i];
  os << "],\n";
  if (c.optimal()) {
    os << "  \"bound_raw\": " << bound_of(c) << ",\n";
    os << "  \"bound_clamped\": " << clamp01(bound_of(c)) << ",\n";
  }
  os << "  \"certificate_polynomials\": [\n";
  for (std::size_t i = 0; i < c.R.size(); ++i)
    os << "    \"" << to_string(c.R[i]) << (i + 1 < c.R.size() ? "\",\n" : "\"\n");
  os << "  ],\n  \"multipliers\": {\n";
  for (std::size_t i = 0; i < c.multipliers.size(); ++i)
    os << "    \"" << c.multipliers[i].first << "\": \"" << to_string(c.multipliers[i].second)
       << (i + 1 < c.multipliers.size() ? "\",\n" : "\"\n");
  os << "  },\n  \"solver\": {\n";
  os << "    \"message\": \"" << c.solver_message << "\",\n";
  os << "    \"iterations\": " << c.iterations << ",\n";
  os << "    \"seconds\": " << c.solve_seconds << ",\n";
  os << "    \"max_equality_residual\": " << c.max_residual << ",\n";
  os << "    \"min_gram_eigenvalue\": " << c.min_gram_eigenvalue << ",\n";
  os << "    \"degree_attempts\": [";
  for (std::size_t i = 0; i < c.attempts.size(); ++i)
    os << (i ? ", " : "") << "[" << c.attempts[i].first << ", \""
       << to_string(c.attempts[i].second) << "\"]";
  os << "]\n  }\n}\n";
  return os.str();
}

/// Plot-grid export: CSV rows (x1..xn, step i, R value), one block per time
/// step for time-varying certificates.
inline void export_plot_grid(const Certificate& cert, const std::vector<double>& lo,
                             const std::vector<double>& hi, const std::vector<int>& cells,
                             std::ostream& os) {
  if (!cert.optimal()) throw std::logic_error("export_plot_grid: certificate is not Optimal");
  const std::size_t n = lo.size();
  os.precision(10);
  for (std::size_t d = 0; d < n; ++d) os << "x" << (d + 1) << ",";
  os << "step,value\n";
  std::vector<int> idx(n, 0);
  for (std::size_t step = 0; step < cert.R.size(); ++step) {
    std::fill(idx.begin(), idx.end(), 0);
    bool done = false;
    while (!done) {
      VarValues point;
      for (std::size_t d = 0; d < n; ++d) {
        const double t = cells[d] > 1 ? static_cast<double>(idx[d]) / (cells[d] - 1) : 0.5;
        const double v = lo[d] + (hi[d] - lo[d]) * t;
        point[state_var(static_cast<std::uint32_t>(d) + 1)] = v;
        os << v << ",";
      }
      os << step << "," << cert.R[step].evaluate(point) << "\n";
      // odometer
      std::size_t d = 0;
      while (d < n) {
        if (++idx[d] < cells[d]) break;
        idx[d] = 0;
        ++d;
      }
      done = (d == n);
    }
  }
}

}  // namespace reachcert
