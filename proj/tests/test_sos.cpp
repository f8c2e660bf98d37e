#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "reachcert/ipm.hpp"
#include "reachcert/sos.hpp"

using namespace reachcert;

namespace {

const VarId x1 = state_var(1);

struct Compiled {
  SdpBuilder builder;
  SosCompiler sos{builder};
};

SdpSolution solve_feasibility(SdpBuilder& builder) {
  builder.set_objective(AffineForm(0.0), true);
  return solve_sdp(builder.build());
}

}  // namespace

TEST_CASE("perfect square is SOS and its Gram reconstructs it") {
  Compiled c;
  const Polynomial p = parse_polynomial("x1^2 + 2*x1 + 1");
  const int rec = c.sos.assert_sos(p, 2, "sq");
  auto sol = solve_feasibility(c.builder);
  REQUIRE(sol.status == SdpStatus::Optimal);
  const auto& record = c.sos.records()[static_cast<std::size_t>(rec)];
  const double err = gram_reconstruction_error(record, sol.block_values[record.block],
                                               sol.decision_values);
  CHECK(err < 1e-6);
  CHECK(sol.min_block_eigenvalue >= -1e-9);
}

TEST_CASE("a linear polynomial is not SOS") {
  Compiled c;
  c.sos.assert_sos(parse_polynomial("x1"), 2, "lin");
  const auto sol = solve_feasibility(c.builder);
  CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("strictly positive quadratic has a positive definite Gram") {
  Compiled c;
  const Polynomial p = parse_polynomial("x1^2 - 2*x1 + 2");  // (x-1)^2 + 1
  const int rec = c.sos.assert_sos(p, 2, "pd");
  auto sol = solve_feasibility(c.builder);
  REQUIRE(sol.status == SdpStatus::Optimal);
  const auto& record = c.sos.records()[static_cast<std::size_t>(rec)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sol.block_values[record.block]);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("degree checks") {
  Compiled c;
  CHECK_THROWS_AS(c.sos.assert_sos(parse_polynomial("x1^2"), 3, "odd"), std::invalid_argument);
  CHECK_THROWS_AS(c.sos.assert_sos(parse_polynomial("x1^4"), 2, "over"), std::invalid_argument);
}

TEST_CASE("nonnegativity on a set via multipliers") {
  SECTION("1 - x^2 on [-1, 1]") {
    Compiled c;
    SemialgebraicSet set;
    set.constraints = {parse_polynomial("1 - x1^2")};
    c.sos.assert_nonneg_on_set(parse_polynomial("1 - x1^2"), set, 2, "a");
    CHECK(solve_feasibility(c.builder).status == SdpStatus::Optimal);
  }
  SECTION("x on x >= 0") {
    Compiled c;
    SemialgebraicSet set;
    set.constraints = {parse_polynomial("x1")};
    c.sos.assert_nonneg_on_set(parse_polynomial("x1"), set, 2, "b");
    CHECK(solve_feasibility(c.builder).status == SdpStatus::Optimal);
  }
  SECTION("-1 is nowhere nonnegative") {
    Compiled c;
    SemialgebraicSet set;
    set.constraints = {parse_polynomial("x1")};
    c.sos.assert_nonneg_on_set(Polynomial(-1.0), set, 2, "c");
    CHECK(solve_feasibility(c.builder).status == SdpStatus::Infeasible);
  }
}

TEST_CASE("nonnegativity on a union of pieces") {
  SECTION("x^2 - 1 on {x >= 1} union {-x >= 1}") {
    Compiled c;
    SemialgebraicSet right, left;
    right.constraints = {parse_polynomial("x1 - 1")};
    left.constraints = {parse_polynomial("-x1 - 1")};
    RegionUnion u{{right, left}};
    const auto fams =
        c.sos.assert_nonneg_on_union(parse_polynomial("x1^2 - 1"), u, 4, "u");
    CHECK(fams.size() == 2);
    CHECK(solve_feasibility(c.builder).status == SdpStatus::Optimal);
  }
  SECTION("x is negative on the left piece") {
    Compiled c;
    SemialgebraicSet right, left;
    right.constraints = {parse_polynomial("x1 - 1")};
    left.constraints = {parse_polynomial("-x1 - 1")};
    RegionUnion u{{right, left}};
    c.sos.assert_nonneg_on_union(parse_polynomial("x1"), u, 4, "v");
    CHECK(solve_feasibility(c.builder).status == SdpStatus::Infeasible);
  }
  SECTION("empty union is rejected") {
    Compiled c;
    CHECK_THROWS_AS(c.sos.assert_nonneg_on_union(Polynomial(1.0), RegionUnion{}, 2, "e"),
                    std::invalid_argument);
  }
}

TEST_CASE("sum of random squares is always SOS at matching degree") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coeff(-1, 1);
  const VarId x2 = state_var(2);
  for (int rep = 0; rep < 5; ++rep) {
    Polynomial sum;
    for (int k = 0; k < 3; ++k) {
      Polynomial q;
      for (const auto& m : monomial_basis({x1, x2}, 2)) q.add_term(m, coeff(rng));
      sum = sum + q * q;
    }
    Compiled c;
    c.sos.assert_sos(sum, 4, "sumsq");
    const auto sol = solve_feasibility(c.builder);
    CHECK(sol.status == SdpStatus::Optimal);
  }
}

TEST_CASE("solved nonneg assertion holds on sampled points") {
  Compiled c;
  const auto set = box_set({-1.0}, {2.0});
  // p = x + 1 is nonnegative on [-1, 2]
  const Polynomial p = parse_polynomial("x1 + 1");
  c.sos.assert_nonneg_on_set(p, set, 2, "s");
  const auto sol = solve_feasibility(c.builder);
  REQUIRE(sol.status == SdpStatus::Optimal);
  for (const auto& pt : detail::lattice_points({-1.0}, {2.0}, 1000))
    CHECK(p.evaluate({{x1, pt[0]}}) >= -1e-6);
}

TEST_CASE("quadratic box description is used for boxes") {
  const auto set = box_set({0.0}, {1.0});
  const auto quad = SosCompiler::compilation_constraints(set, true);
  REQUIRE(quad.size() == 1);
  CHECK(quad[0].degree() == 2);
  const auto lin = SosCompiler::compilation_constraints(set, false);
  CHECK(lin.size() == 2);
}

TEST_CASE("gram poly of a fresh SOS block spans the basis") {
  Compiled c;
  const auto p = c.sos.fresh_sos({x1}, 4, "R");
  CHECK(p.degree() == 4);
  CHECK(p.terms().size() == 5);  // 1, x, x^2, x^3, x^4
}

TEST_CASE("debug dump lists blocks and equalities") {
  Compiled c;
  c.sos.assert_sos(parse_polynomial("x1^2 + 1"), 2, "d");
  const std::string dump = c.sos.dump();
  CHECK(dump.find("equalities") != std::string::npos);
  CHECK(dump.find("psd block") != std::string::npos);
}

TEST_CASE("degree budget below constraint degree is an error") {
  Compiled c;
  SemialgebraicSet set;
  set.constraints = {parse_polynomial("1 - x1^4")};
  CHECK_THROWS_WITH(
      c.sos.assert_nonneg_on_set(Polynomial(1.0), set, 2, "tiny"),
      Catch::Matchers::ContainsSubstring("need at least"));
}
