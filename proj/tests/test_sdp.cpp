#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "reachcert/ipm.hpp"

using namespace reachcert;

namespace {

// maximize t s.t. [[1, t], [t, 1]] >= 0
SdpProblem boundary_problem() {
  SdpBuilder b;
  const int blk = b.add_psd_block("Q", 2);
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 0, 0)) - AffineForm(1.0));
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 1, 1)) - AffineForm(1.0));
  b.set_objective(AffineForm::decision(b.gram_entry(blk, 0, 1)), /*maximize=*/true);
  return b.build();
}

}  // namespace

TEST_CASE("2x2 PSD boundary optimum") {
  const auto sol = solve_sdp(boundary_problem());
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.max_equality_residual < 1e-7);
  CHECK(sol.min_block_eigenvalue > -1e-9);
}

TEST_CASE("free scalar with 1x1 block") {
  // minimize s s.t. [s - 2] >= 0
  SdpBuilder b;
  const DecisionId s = b.add_scalar("s", /*nonneg=*/false);
  const int blk = b.add_psd_block("F", 1);
  // F_00 = s - 2
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 0, 0)) - AffineForm::decision(s) +
                 AffineForm(2.0));
  b.set_objective(AffineForm::decision(s), /*maximize=*/false);
  const auto sol = solve_sdp(b.build());
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(2.0).margin(1e-6));
  CHECK(sol.scalar_values[0] == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("infeasible sign-constrained scalar") {
  SdpBuilder b;
  const DecisionId a = b.add_scalar("a", /*nonneg=*/true);
  b.add_equality(AffineForm::decision(a) + AffineForm(1.0));  // a = -1
  b.set_objective(AffineForm::decision(a), /*maximize=*/false);
  const auto sol = solve_sdp(b.build());
  CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("unbounded maximize") {
  SdpBuilder b;
  const DecisionId a = b.add_scalar("a", /*nonneg=*/true);
  const DecisionId c = b.add_scalar("c", /*nonneg=*/true);
  b.add_equality(AffineForm::decision(c) - AffineForm(1.0));  // pin an unrelated scalar
  b.set_objective(AffineForm::decision(a), /*maximize=*/true);
  const auto sol = solve_sdp(b.build());
  CHECK(sol.status == SdpStatus::Unbounded);
}

TEST_CASE("determinism: identical runs produce identical results") {
  const auto p = boundary_problem();
  const auto s1 = solve_sdp(p);
  const auto s2 = solve_sdp(p);
  CHECK(s1.status == s2.status);
  CHECK(s1.objective == s2.objective);  // bit-identical
  CHECK(s1.iterations == s2.iterations);
}

TEST_CASE("row scaling robustness") {
  auto p = boundary_problem();
  const auto base = solve_sdp(p);
  for (auto& row : p.rows) {
    for (auto& [col, c] : row.entries) c *= 1e3;
    row.rhs *= 1e3;
  }
  const auto scaled = solve_sdp(p);
  REQUIRE(scaled.status == SdpStatus::Optimal);
  CHECK(std::abs(scaled.objective - base.objective) / std::abs(base.objective) < 1e-5);
}

TEST_CASE("weak duality on a maximize problem") {
  // max <C,X> s.t. tr(X) = 1, X >= 0 with C = diag(1, 3): optimum 3.
  SdpBuilder b;
  const int blk = b.add_psd_block("X", 2);
  AffineForm trace = AffineForm::decision(b.gram_entry(blk, 0, 0)) +
                     AffineForm::decision(b.gram_entry(blk, 1, 1));
  b.add_equality(trace - AffineForm(1.0));
  b.set_objective(AffineForm::decision(b.gram_entry(blk, 0, 0)) +
                      AffineForm::decision(b.gram_entry(blk, 1, 1)) * 3.0,
                  /*maximize=*/true);
  const auto sol = solve_sdp(b.build());
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(3.0).margin(1e-6));
  // dual: min y s.t. y*I - C >= 0 -> any y >= 3 is dual feasible
  for (double y : {3.0, 3.5, 10.0}) CHECK(sol.objective <= y + 1e-6);
}

TEST_CASE("solver settings: iteration cap yields best iterate") {
  SdpSettings s;
  s.max_iter = 2;
  const auto sol = solve_sdp(boundary_problem(), s);
  CHECK(sol.status == SdpStatus::NumericalTrouble);
  CHECK_FALSE(sol.decision_values.empty());
}

TEST_CASE("unknown backend is rejected, embedded resolves") {
  CHECK_THROWS_AS(get_backend("external"), std::invalid_argument);
  CHECK(get_backend("embedded")->name() == "embedded");
}

TEST_CASE("SDPA export/import round trip") {
  const auto p = boundary_problem();
  std::stringstream ss;
  export_sdpa(p, ss);
  const auto q = import_sdpa(ss);
  CHECK(q.rows.size() == p.rows.size());
  const auto s1 = solve_sdp(p);
  const auto s2 = solve_sdp(q);
  REQUIRE(s2.status == SdpStatus::Optimal);
  CHECK(s2.objective == Catch::Approx(s1.objective).margin(1e-7));
}

TEST_CASE("mixed problem with blocks and scalars") {
  // max gamma s.t. gamma <= Q_00, Q = [[a, 0], [0, 1]], a <= 2  (so optimum 2)
  SdpBuilder b;
  const DecisionId gamma = b.add_scalar("gamma", true);
  const DecisionId slack = b.add_scalar("slack", true);
  const int blk = b.add_psd_block("Q", 2);
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 1, 1)) - AffineForm(1.0));
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 0, 1)));
  // Q_00 + slack = 2
  b.add_equality(AffineForm::decision(b.gram_entry(blk, 0, 0)) + AffineForm::decision(slack) -
                 AffineForm(2.0));
  // gamma = Q_00
  b.add_equality(AffineForm::decision(gamma) - AffineForm::decision(b.gram_entry(blk, 0, 0)));
  b.set_objective(AffineForm::decision(gamma), true);
  const auto sol = solve_sdp(b.build());
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(2.0).margin(1e-6));
}
