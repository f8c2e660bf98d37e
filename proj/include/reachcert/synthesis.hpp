#pragma once

// Joint controller/certificate synthesis: alternation between certificate
// synthesis at a fixed controller and derivative-free coordinate search over
// the controller parameters, scoring every candidate by its certified bound.
// Every reported bound is therefore backed by a valid certificate for the
// returned fixed controller, independent of the search heuristics.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reachcert/certificates.hpp"
#include "reachcert/model.hpp"
#include "reachcert/validation.hpp"

namespace reachcert {

struct AdmissibilityResult {
  bool pass = false;
  std::vector<double> witness_state;  // on failure: a state with pi(x) outside U
  std::vector<double> witness_input;
  std::string detail;
};

namespace detail {

inline bool is_affine_in_state(const std::vector<Polynomial>& policies) {
  for (const auto& p : policies)
    if (p.degree() > 1) return false;
  return true;
}

inline std::vector<std::vector<double>> box_vertices(const std::vector<double>& lo,
                                                     const std::vector<double>& hi) {
  std::vector<std::vector<double>> out;
  const std::size_t n = lo.size();
  for (std::size_t mask = 0; mask < (static_cast<std::size_t>(1) << n); ++mask) {
    std::vector<double> v(n);
    for (std::size_t d = 0; d < n; ++d)
      v[d] = (mask & (static_cast<std::size_t>(1) << d)) ? hi[d] : lo[d];
    out.push_back(std::move(v));
  }
  return out;
}

inline VarValues state_point(const std::vector<double>& x) {
  VarValues point;
  for (std::size_t d = 0; d < x.size(); ++d)
    point[state_var(static_cast<std::uint32_t>(d) + 1)] = x[d];
  return point;
}

}  // namespace detail

/// Checks pi(x) in U for all x in the safe set: exact vertex enumeration for
/// affine feedback on boxes (with convex box U), a seeded 10^4-point sample
/// with 1e-6 margin otherwise.
inline AdmissibilityResult admissibility_check(const Controller& controller,
                                               const SemialgebraicSet& safe,
                                               const SemialgebraicSet& input_set,
                                               std::uint64_t seed = 7) {
  if (controller.mode != Controller::Mode::Fixed)
    throw std::invalid_argument("admissibility_check: controller must be fixed");
  AdmissibilityResult res;

  auto check_point = [&](const std::vector<double>& x, double margin) -> bool {
    const VarValues point = detail::state_point(x);
    std::vector<double> u;
    for (const auto& p : controller.policy_at(0)) u.push_back(p.evaluate(point));
    if (u.empty()) return true;
    if (input_set.min_constraint(u) >= -margin) return true;
    res.pass = false;
    res.witness_state = x;
    res.witness_input = u;
    std::ostringstream os;
    os << "pi(x) leaves U at x = (";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "), u = (";
    for (std::size_t i = 0; i < u.size(); ++i) os << (i ? ", " : "") << u[i];
    os << ")";
    res.detail = os.str();
    return false;
  };

  bool exact = safe.is_box() && input_set.is_box() &&
               detail::is_affine_in_state(controller.policy_at(0));
  if (exact) {
    for (const auto& v : detail::box_vertices(*safe.box_lo, *safe.box_hi))
      if (!check_point(v, 0.0)) return res;
    res.pass = true;
    res.detail = "vertex-exact";
    return res;
  }

  auto [lo, hi] = safe.bounding_box();
  detail::NormalSampler rng(detail::splitmix64(seed));
  std::vector<double> x(lo.size());
  for (std::uint32_t k = 0; k < 10000; ++k) {
    for (std::size_t d = 0; d < lo.size(); ++d)
      x[d] = lo[d] + (hi[d] - lo[d]) * rng.uniform01();
    if (!safe.contains(x)) continue;
    if (!check_point(x, 1e-6)) return res;
  }
  res.pass = true;
  res.detail = "sampled (10^4 points, 1e-6 margin)";
  return res;
}

struct SearchSettings {
  CertificateKind kind = CertificateKind::TiInfinite;
  std::uint32_t varying_steps = 4;  // k when scoring with TvUnbounded
  CertificateOptions certificate;
  std::uint32_t max_iterations = 6;  // alternation iterations (2 sweeps each)
  double improvement_tol = 1e-3;
  std::uint32_t golden_evals = 8;  // certificate solves per golden-section refine
  unsigned threads = 0;
};

struct SearchTraceEntry {
  std::uint32_t iteration = 0;
  std::vector<double> params;
  double bound = -1.0;  // -1 encodes "inadmissible or no certificate"
};

struct SynthesisResult {
  Controller controller;  // fixed, numeric
  Certificate certificate;
  double bound = 0.0;
  std::uint32_t iterations = 0;
  std::vector<double> best_bound_per_iteration;  // nondecreasing
  std::vector<SearchTraceEntry> trace;
  AdmissibilityResult admissibility;
};

class ControllerSynthesizer {
 public:
  ControllerSynthesizer(const StochasticSystem& system, const Controller& controller_template,
                        const ReachAvoidSpec& spec, SearchSettings settings = {})
      : system_(system), template_(controller_template), spec_(spec), settings_(settings) {
    if (template_.mode != Controller::Mode::Template)
      throw std::invalid_argument("synthesize: controller must be in template mode");
    if (!spec_.safe.is_box() || !template_.admissible.is_box() ||
        !affine_template_in_state())
      throw std::invalid_argument(
          "synthesize: the coordinate search needs an affine template over box sets "
          "(general templates: use admissibility_check + fixed-controller synthesis)");
  }

  SynthesisResult run() {
    const std::uint32_t P = template_.param_count;
    std::vector<double> params(P, 0.0);  // initial gain 0

    {
      const Controller c0 = template_.instantiate(params);
      const auto adm = admissibility_check(c0, spec_.safe, template_.admissible);
      if (!adm.pass)
        throw std::invalid_argument(
            "synthesize: no admissible starting parameters (zero gain fails): " + adm.detail);
    }

    SynthesisResult result;
    double best = score(params, 0, result.trace);
    std::vector<double> best_params = params;

    std::uint32_t low_improvement_streak = 0;
    std::uint32_t iter = 0;
    for (iter = 1; iter <= settings_.max_iterations; ++iter) {
      const double before = best;
      for (int sweep = 0; sweep < 2; ++sweep) {
        for (std::uint32_t p = 0; p < P; ++p) {
          auto interval = admissible_interval(best_params, p);
          if (!interval) continue;
          auto [lo, hi] = *interval;
          const double candidate =
              golden_section(best_params, p, lo, hi, best, iter, result.trace);
          std::vector<double> trial = best_params;
          trial[p] = candidate;
          const double sc = score(trial, iter, result.trace);
          if (sc > best) {
            best = sc;
            best_params = trial;
          }
        }
      }
      result.best_bound_per_iteration.push_back(best);
      if (best - before < settings_.improvement_tol) {
        if (++low_improvement_streak >= 2) break;
      } else {
        low_improvement_streak = 0;
      }
    }

    result.iterations = std::min(iter, settings_.max_iterations);
    result.controller = template_.instantiate(best_params);
    result.admissibility =
        admissibility_check(result.controller, spec_.safe, template_.admissible);
    CertificateSynthesizer synth(system_, result.controller, spec_, settings_.certificate);
    result.certificate = synth.synthesize(settings_.kind, settings_.varying_steps);
    result.bound = result.certificate.optimal() ? bound_of(result.certificate) : 0.0;
    return result;
  }

 private:
  const StochasticSystem& system_;
  Controller template_;
  const ReachAvoidSpec& spec_;
  SearchSettings settings_;
  std::map<std::vector<double>, double> cache_;

  bool affine_template_in_state() const {
    for (const auto& tp : template_.template_policies)
      if (tp.degree() > 1) return false;
    return true;
  }

  /// Certified bound for a parameter vector; -1 when inadmissible or when no
  /// Optimal certificate exists at the configured degree.
  double score(const std::vector<double>& params, std::uint32_t iteration,
               std::vector<SearchTraceEntry>& trace) {
    auto it = cache_.find(params);
    if (it != cache_.end()) return it->second;
    double value = -1.0;
    const Controller fixed = template_.instantiate(params);
    if (admissibility_check(fixed, spec_.safe, template_.admissible).pass) {
      CertificateSynthesizer synth(system_, fixed, spec_, settings_.certificate);
      const Certificate cert = synth.synthesize(settings_.kind, settings_.varying_steps);
      if (cert.optimal()) value = bound_of(cert);
    }
    cache_[params] = value;
    trace.push_back({iteration, params, value});
    return value;
  }

  /// Interval for parameter p (others fixed) keeping pi(v) in U at every
  /// vertex of the safe box; exact for parameter-affine templates.
  std::optional<std::pair<double, double>> admissible_interval(
      const std::vector<double>& params, std::uint32_t p) const {
    const auto& ulo = *template_.admissible.box_lo;
    const auto& uhi = *template_.admissible.box_hi;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& v : detail::box_vertices(*spec_.safe.box_lo, *spec_.safe.box_hi)) {
      const VarValues point = detail::state_point(v);
      for (std::size_t r = 0; r < template_.template_policies.size(); ++r) {
        const AffineForm u = template_.template_policies[r].evaluate_at(point);
        double slope = 0.0, offset = u.constant();
        for (const auto& [id, c] : u.linear()) {
          if (id == static_cast<DecisionId>(p))
            slope = c;
          else
            offset += c * params[static_cast<std::size_t>(id)];
        }
        if (slope == 0.0) {
          if (offset < ulo[r] - 1e-12 || offset > uhi[r] + 1e-12) return std::nullopt;
          continue;
        }
        double a = (ulo[r] - offset) / slope;
        double b = (uhi[r] - offset) / slope;
        if (a > b) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
      }
    }
    if (!(lo <= hi)) return std::nullopt;
    if (!std::isfinite(lo)) lo = -1e3;
    if (!std::isfinite(hi)) hi = 1e3;
    return std::make_pair(lo, hi);
  }

  /// Deterministic golden-section refinement maximizing the certified bound of
  /// parameter p over [lo, hi].
  double golden_section(const std::vector<double>& params, std::uint32_t p, double lo, double hi,
                        double current_best, std::uint32_t iteration,
                        std::vector<SearchTraceEntry>& trace) {
    const double invphi = 0.6180339887498949;
    auto eval = [&](double v) {
      std::vector<double> trial = params;
      trial[p] = v;
      return score(trial, iteration, trace);
    };
    double a = lo, b = hi;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = eval(c), fd = eval(d);
    std::uint32_t evals = 2;
    double best_v = params[p], best_f = current_best;
    auto consider = [&](double v, double f) {
      if (f > best_f) {
        best_f = f;
        best_v = v;
      }
    };
    consider(c, fc);
    consider(d, fd);
    while (evals < settings_.golden_evals) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = eval(c);
        consider(c, fc);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = eval(d);
        consider(d, fd);
      }
      ++evals;
    }
    return best_v;
  }
};

/// Alternation entry point (the spec's synthesize operation).
inline SynthesisResult synthesize(const StochasticSystem& system,
                                  const Controller& controller_template,
                                  const ReachAvoidSpec& spec, SearchSettings settings = {}) {
  ControllerSynthesizer s(system, controller_template, spec, settings);
  return s.run();
}

}  // namespace reachcert
