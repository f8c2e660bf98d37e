#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "reachcert/poly.hpp"

using namespace reachcert;

namespace {

const VarId x1 = state_var(1);
const VarId x2 = state_var(2);
const VarId w1 = noise_var(1);

Polynomial random_poly(std::mt19937_64& rng, const std::vector<VarId>& vars,
                       std::uint32_t max_deg) {
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  std::uniform_int_distribution<int> pick(0, 3);
  Polynomial p;
  for (const auto& m : monomial_basis(vars, max_deg))
    if (pick(rng) == 0) p.add_term(m, coeff(rng));
  return p;
}

}  // namespace

TEST_CASE("evaluate matches direct expansion") {
  const Polynomial p =
      Polynomial::var(x1).pow(2) + 2.0 * Polynomial::var(x1) + Polynomial(1.0);
  CHECK(p.evaluate({{x1, 3.0}}) == Catch::Approx(16.0));

  CHECK(Polynomial().evaluate({{x1, 7.0}}) == 0.0);

  const Polynomial lin = 0.75 * Polynomial::var(x1);
  CHECK(lin.evaluate({{x1, 2.0}}) == Catch::Approx(1.5));

  CHECK_THROWS_AS(p.evaluate({{x2, 1.0}}), std::invalid_argument);
}

TEST_CASE("multiply") {
  const Polynomial x = Polynomial::var(x1);
  const Polynomial prod = (x + 1.0) * (x - 1.0);
  CHECK(prod == x.pow(2) - 1.0);

  CHECK((x * Polynomial()).is_zero());

  const Polynomial y = Polynomial::var(x2);
  const Polynomial sq = (x + y) * (x + y);
  CHECK(sq.coeff(Monomial::var(x1, 2)) == Catch::Approx(1.0));
  CHECK(sq.coeff(Monomial({{x1, 1}, {x2, 1}})) == Catch::Approx(2.0));
  CHECK(sq.coeff(Monomial::var(x2, 2)) == Catch::Approx(1.0));
  CHECK(sq.term_count() == 3);
}

TEST_CASE("compose") {
  const Polynomial x = Polynomial::var(x1);
  const Polynomial w = Polynomial::var(w1);

  const Polynomial sq = x.pow(2);
  const Polynomial img = sq.compose({{x1, 0.75 * x + w}});
  CHECK(img.coeff(Monomial::var(x1, 2)) == Catch::Approx(0.5625));
  CHECK(img.coeff(Monomial({{x1, 1}, {w1, 1}})) == Catch::Approx(1.5));
  CHECK(img.coeff(Monomial::var(w1, 2)) == Catch::Approx(1.0));

  CHECK(x.compose({{x1, x}}) == x);

  const Polynomial y = Polynomial::var(x2);
  const Polynomial p = x.pow(2) + y;
  CHECK(p.compose({{x1, y}, {x2, Polynomial(1.0)}}) == y.pow(2) + 1.0);

  CHECK_THROWS_AS(p.compose({{x1, y}}), std::invalid_argument);
}

TEST_CASE("monomial basis in graded-lex order") {
  const auto b1 = monomial_basis({x1}, 2);
  REQUIRE(b1.size() == 3);
  CHECK(b1[0] == Monomial::one());
  CHECK(b1[1] == Monomial::var(x1));
  CHECK(b1[2] == Monomial::var(x1, 2));

  const auto b2 = monomial_basis({x1, x2}, 1);
  REQUIRE(b2.size() == 3);
  CHECK(b2[1] == Monomial::var(x1));
  CHECK(b2[2] == Monomial::var(x2));

  CHECK(monomial_basis({x1, x2, noise_var(1)}, 2).size() == 10);
}

TEST_CASE("basis count matches C(n+d, d)") {
  std::vector<VarId> vars;
  for (std::uint32_t n = 1; n <= 4; ++n) {
    vars.push_back(state_var(n));
    for (std::uint32_t d = 0; d <= 8; ++d)
      CHECK(monomial_basis(vars, d).size() == binomial(n + d, d));
  }
}

TEST_CASE("compose-evaluate commutation") {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> xdist(-1.5, 1.5);
  for (int rep = 0; rep < 10; ++rep) {
    const Polynomial p = random_poly(rng, {x1, x2}, 3);
    const Polynomial f1 = random_poly(rng, {x1, x2}, 2);
    const Polynomial f2 = random_poly(rng, {x1, x2}, 2);
    const Polynomial composed = p.compose({{x1, f1}, {x2, f2}});
    for (int k = 0; k < 100; ++k) {
      const VarValues z{{x1, xdist(rng)}, {x2, xdist(rng)}};
      const VarValues fz{{x1, f1.evaluate(z)}, {x2, f2.evaluate(z)}};
      const double lhs = composed.evaluate(z);
      const double rhs = p.evaluate(fz);
      CHECK(lhs == Catch::Approx(rhs).margin(1e-9).epsilon(1e-9));
    }
  }
}

TEST_CASE("degree law for products") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    Polynomial p = random_poly(rng, {x1, x2}, 3);
    Polynomial q = random_poly(rng, {x1, x2}, 4);
    if (p.is_zero() || q.is_zero()) continue;
    CHECK((p * q).degree() == p.degree() + q.degree());
  }
}

TEST_CASE("canonicalization prunes cancelled terms") {
  std::mt19937_64 rng(7);
  const Polynomial p = random_poly(rng, {x1, x2}, 4);
  CHECK((p + (-p)).term_count() == 0);
  CHECK((p - p).is_zero());
}

TEST_CASE("print/parse round trip") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 40; ++rep) {
    const Polynomial p = random_poly(rng, {x1, x2, w1}, 4);
    const Polynomial q = parse_polynomial(to_string(p));
    const Polynomial diff = p - q;
    for (const auto& [m, c] : diff.terms()) CHECK(std::abs(c) < 1e-12);
  }

  CHECK(parse_polynomial("0").is_zero());
  CHECK(parse_polynomial("x1^2 + 2*x1 + 1").evaluate({{x1, 3.0}}) == Catch::Approx(16.0));
  CHECK(parse_polynomial("0.75*x1").coeff(Monomial::var(x1)) == Catch::Approx(0.75));
  CHECK(parse_polynomial("-x1 + x2").coeff(Monomial::var(x1)) == Catch::Approx(-1.0));
  CHECK(parse_polynomial("2.5e-1*w1^2").coeff(Monomial::var(w1, 2)) == Catch::Approx(0.25));

  CHECK_THROWS_AS(parse_polynomial("x1 + + x2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_polynomial("y1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_polynomial("x1 *"), std::invalid_argument);
  CHECK_THROWS_AS(parse_polynomial("3..2*x1"), std::invalid_argument);
}

TEST_CASE("grlex order is a strict weak order on small bases") {
  GrlexLess less;
  const auto basis = monomial_basis({x1, x2}, 3);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    CHECK_FALSE(less(basis[i], basis[i]));
    for (std::size_t j = i + 1; j < basis.size(); ++j) {
      CHECK(less(basis[i], basis[j]));
      CHECK_FALSE(less(basis[j], basis[i]));
    }
  }
}
