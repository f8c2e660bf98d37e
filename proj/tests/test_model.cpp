#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "reachcert/model.hpp"

using namespace reachcert;

namespace {

const VarId x1 = state_var(1);
const VarId x2 = state_var(2);
const VarId u1 = input_var(1);
const VarId w1 = noise_var(1);
const VarId w2 = noise_var(2);

// Independent oracle: E[w^k] for w ~ N(0, var) by composite Simpson quadrature
// over +-12 sigma.
double moment_by_quadrature(std::uint32_t order, double variance) {
  if (variance == 0.0) return order == 0 ? 1.0 : 0.0;
  const double sigma = std::sqrt(variance);
  const double lo = -12.0 * sigma, hi = 12.0 * sigma;
  const int n = 20000;  // even
  const double h = (hi - lo) / n;
  auto f = [&](double w) {
    return std::pow(w, static_cast<double>(order)) *
           std::exp(-w * w / (2.0 * variance)) / (sigma * std::sqrt(2.0 * M_PI));
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Fast evaluator for the sampling test (flat term list, no map lookups).
struct FlatPoly {
  struct Term {
    double c;
    std::uint32_t ex1, ex2, ew1, ew2;
  };
  std::vector<Term> terms;

  explicit FlatPoly(const Polynomial& p) {
    for (const auto& [m, c] : p.terms())
      terms.push_back({c, m.degree_in(x1), m.degree_in(x2), m.degree_in(w1), m.degree_in(w2)});
  }
  double eval(double a, double b, double c1, double c2) const {
    double acc = 0;
    for (const auto& t : terms)
      acc += t.c * std::pow(a, t.ex1) * std::pow(b, t.ex2) * std::pow(c1, t.ew1) *
             std::pow(c2, t.ew2);
    return acc;
  }
};

double box_muller(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(std::numeric_limits<double>::min(), 1.0);
  const double r = std::sqrt(-2.0 * std::log(uni(rng)));
  const double a = 2.0 * M_PI * uni(rng);
  return r * std::cos(a);
}

}  // namespace

TEST_CASE("gaussian moments") {
  CHECK(gaussian_moment(1, 0.37) == 0.0);
  CHECK(gaussian_moment(2, 0.1) == Catch::Approx(0.1));
  CHECK(gaussian_moment(4, 0.3) == Catch::Approx(3.0 * 0.3 * 0.3));
  CHECK(gaussian_moment(6, 1.0) == Catch::Approx(moment_by_quadrature(6, 1.0)).epsilon(1e-8));
  CHECK_THROWS_AS(gaussian_moment(2, -1.0), std::invalid_argument);
}

TEST_CASE("moment identity vs quadrature") {
  for (double var : {0.01, 0.1, 1.0})
    for (std::uint32_t k = 1; k <= 5; ++k) {
      const double closed = gaussian_moment(2 * k, var);
      const double quad = moment_by_quadrature(2 * k, var);
      CHECK(closed == Catch::Approx(quad).epsilon(1e-7));
    }
}

TEST_CASE("expect_over_noise") {
  const Polynomial x = Polynomial::var(x1);
  const Polynomial w = Polynomial::var(w1);
  const NoiseSpec noise({0.1});

  const Polynomial sq = (0.75 * x + w) * (0.75 * x + w);
  const Polynomial ex = expect_over_noise(sq, noise);
  CHECK(ex.coeff(Monomial::var(x1, 2)) == Catch::Approx(0.5625));
  CHECK(ex.coeff(Monomial::one()) == Catch::Approx(0.1));
  CHECK(ex.term_count() == 2);

  CHECK(expect_over_noise(x.pow(2), noise) == x.pow(2));

  const NoiseSpec noise2({0.1, 0.2});
  const Polynomial cross = Polynomial::var(w1) * Polynomial::var(w2);
  CHECK(expect_over_noise(cross, noise2).is_zero());

  const Polynomial with_u = Polynomial::var(u1) + w;
  CHECK_THROWS_AS(expect_over_noise(with_u, noise), std::invalid_argument);
}

TEST_CASE("expect_over_noise is linear, coefficient-wise exactly") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coeff(-2, 2);
  const NoiseSpec noise({0.1, 0.5});
  for (int rep = 0; rep < 20; ++rep) {
    Polynomial p, q;
    for (const auto& m : monomial_basis({x1, x2, w1, w2}, 4)) {
      p.add_term(m, coeff(rng));
      q.add_term(m, coeff(rng));
    }
    const double a = coeff(rng), b = coeff(rng);
    const Polynomial lhs = expect_over_noise(p * a + q * b, noise);
    const Polynomial rhs = expect_over_noise(p, noise) * a + expect_over_noise(q, noise) * b;
    const Polynomial diff = lhs - rhs;
    for (const auto& [m, c] : diff.terms()) CHECK(std::abs(c) < 1e-12);
  }
}

TEST_CASE("expect_over_noise agrees with Monte Carlo sampling") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> coeff(-1, 1), xdist(-1, 1);
  const double v1 = 0.1, v2 = 0.05;
  const NoiseSpec noise({v1, v2});
  const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);

  Polynomial p;
  for (const auto& m : monomial_basis({x1, x2, w1, w2}, 4)) p.add_term(m, coeff(rng));
  const Polynomial expected = expect_over_noise(p, noise);
  const FlatPoly fp(p);

  const int nsamples = 1000000;
  for (int pt = 0; pt < 20; ++pt) {
    const double a = xdist(rng), b = xdist(rng);
    double sum = 0, sumsq = 0;
    for (int i = 0; i < nsamples; ++i) {
      const double val = fp.eval(a, b, s1 * box_muller(rng), s2 * box_muller(rng));
      sum += val;
      sumsq += val * val;
    }
    const double mean = sum / nsamples;
    const double se = std::sqrt((sumsq / nsamples - mean * mean) / nsamples);
    const double exact = expected.evaluate({{x1, a}, {x2, b}});
    CHECK(std::abs(mean - exact) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("closed loop substitutes the controller") {
  const Polynomial x = Polynomial::var(x1);
  const NoiseSpec noise({0.1});

  StochasticSystem sys(1, 1, {x + Polynomial::var(u1) + Polynomial::var(w1)}, noise);
  Controller pi = Controller::linear_gain({{0.5}}, input_box_set({-1}, {1}));
  const auto cl = closed_loop(sys, pi);
  REQUIRE(cl.size() == 1);
  CHECK(cl[0] == 0.5 * x + Polynomial::var(w1));

  // system (5): no input at all; any controller leaves it unchanged
  StochasticSystem stable(1, 0, {0.75 * x + Polynomial::var(w1)}, noise);
  const auto cl2 = closed_loop(stable, Controller::zero(0, SemialgebraicSet{}));
  CHECK(cl2[0] == 0.75 * x + Polynomial::var(w1));

  // contraction map 1 under pi = 0
  auto cm1 = StochasticSystem::linear({{0.75, 0.15}, {-0.15, 0.50}}, {0, 0},
                                      NoiseSpec({0.01, 0.01}), 2, true);
  const auto cl3 = closed_loop(cm1, Controller::zero(2, input_box_set({-1, -1}, {1, 1})));
  CHECK(cl3[0] == 0.75 * Polynomial::var(x1) + 0.15 * Polynomial::var(x2) +
                      Polynomial::var(w1));
  CHECK(cl3[1] == -0.15 * Polynomial::var(x1) + 0.50 * Polynomial::var(x2) +
                      Polynomial::var(w2));
  for (const auto& f : cl3)
    for (VarId v : f.variables()) CHECK(var_kind(v) != VarKind::Input);

  Controller tmpl = Controller::linear_template(1, 1, input_box_set({-1}, {1}));
  CHECK_THROWS_AS(closed_loop(sys, tmpl), std::logic_error);
}

TEST_CASE("box sets") {
  const auto b = box_set({1}, {3});
  CHECK(b.constraints.size() == 2);
  CHECK(b.contains({2}));
  CHECK_FALSE(b.contains({0}));
  CHECK(b.contains({1}));  // closed set

  const auto b2 = box_set({-0.2, -0.5}, {2, 0.5});
  CHECK(b2.constraints.size() == 4);
  CHECK(b2.contains({0, 0}));
  CHECK_FALSE(b2.contains({2.1, 0}));

  const auto bq = box_set({1}, {3}, /*quadratic=*/true);
  CHECK(bq.constraints.size() == 1);
  CHECK(bq.contains({2}));
  CHECK_FALSE(bq.contains({0.5}));

  CHECK_THROWS_AS(box_set({3}, {1}), std::invalid_argument);
}

TEST_CASE("euler discretization") {
  const auto Ad = euler_discretize({{-1.0, 2.0}, {0.5, -3.0}}, 0.1);
  CHECK(Ad[0][0] == Catch::Approx(0.9));
  CHECK(Ad[0][1] == Catch::Approx(0.2));
  CHECK(Ad[1][0] == Catch::Approx(0.05));
  CHECK(Ad[1][1] == Catch::Approx(0.7));
}

TEST_CASE("reach-avoid spec construction checks inclusions") {
  RegionUnion unsafe{{box_set({3.0}, {3.3})}};
  RegionUnion sbar{{box_set({1.0}, {3.0})}};

  CHECK_NOTHROW(ReachAvoidSpec(box_set({-3}, {3}), box_set({1.8}, {1.9}),
                               box_set({0.7}, {1.0}), unsafe, sbar, Horizon::finite(10)));

  // initial set poking outside the safe set is rejected
  CHECK_THROWS_AS(ReachAvoidSpec(box_set({1}, {3}), box_set({0.5}, {0.9}),
                                 box_set({1.2}, {1.4}), unsafe, sbar, Horizon::finite(10)),
                  std::invalid_argument);
  // reach set outside the safe set is rejected
  CHECK_THROWS_AS(ReachAvoidSpec(box_set({1}, {3}), box_set({1.8}, {1.9}),
                                 box_set({0.7}, {1.0}), unsafe, sbar, Horizon::finite(10)),
                  std::invalid_argument);
  // unsafe piece overlapping the reach interior is rejected
  RegionUnion bad_unsafe{{box_set({0.8}, {0.9})}};
  CHECK_THROWS_AS(ReachAvoidSpec(box_set({-3}, {3}), box_set({1.8}, {1.9}),
                                 box_set({0.7}, {1.0}), bad_unsafe, sbar, Horizon::finite(10)),
                  std::invalid_argument);
}

TEST_CASE("controller template instantiation") {
  Controller tmpl = Controller::linear_template(2, 2, input_box_set({-1, -1}, {1, 1}));
  CHECK(tmpl.param_count == 4);
  const Controller fixed = tmpl.instantiate({0.1, 0.2, 0.3, 0.4});
  // pi_1 = -0.1 x1 - 0.2 x2
  CHECK(fixed.policies[0][0].evaluate({{x1, 1.0}, {x2, 1.0}}) == Catch::Approx(-0.3));
  CHECK(fixed.policies[0][1].evaluate({{x1, 1.0}, {x2, 1.0}}) == Catch::Approx(-0.7));
  CHECK_THROWS_AS(tmpl.instantiate({1.0}), std::invalid_argument);
}
