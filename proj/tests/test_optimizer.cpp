#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace sweep;
using sweep::testing::lq_exact_path;
using sweep::testing::lq_problem;
using sweep::testing::sec8_problem;
using sweep::testing::sec8_optimal_path;

TEST_CASE("self-anchored solve of the worked instance", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  OptimizerConfig cfg;
  for (int k : {1, 2, 10}) {
    Mesh mesh(k, s.T, s.tau);
    SolveResult r = solve_Pk_fixed_point(s, mesh, cfg);
    REQUIRE(r.converged);
    REQUIRE(r.z.a(0, 0) == Catch::Approx(-0.5).margin(1e-9));
    REQUIRE(r.z.x(0, k) == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(r.J_value == Catch::Approx(0.25).margin(1e-10));
    REQUIRE(r.max_constraint_violation <= 1e-8);
  }
}

TEST_CASE("zero cost keeps the warm start", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  s.terminal = TerminalCost::quadratic_form(Matrix::Zero(1, 1), Vector::Zero(1));
  s.running = RunningCost::zero(1, 1);
  s.a0 = Vector::Zero(1);
  Mesh mesh(6, s.T, s.tau);
  OptimizerConfig cfg;
  SolveResult r = solve_Pk_fixed_point(s, mesh, cfg);
  REQUIRE(r.J_value == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(r.converged);
}

TEST_CASE("grid-search oracle agrees with the direct solver", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  OptimizerConfig cfg;
  for (int k : {1, 2, 3}) {
    Mesh mesh(k, s.T, s.tau);
    SolveResult direct = solve_Pk_fixed_point(s, mesh, cfg);
    ContinuousPath anchor = direct.z.interpolate();
    SolveResult oracle = brute_force_oracle(s, anchor, mesh, -2.0, 2.0, k == 1 ? 1e-3 : 5e-2,
                                            /*pin_initial_controls=*/false);
    for (int j = 0; j < k; ++j)
      REQUIRE(oracle.z.a(0, j) == Catch::Approx(direct.z.a(0, j)).margin(1e-4));
    REQUIRE(std::abs(oracle.J_value - direct.J_value) <= 1e-3);
    // Oracle dominance: the solver is at least as good as exhaustive search.
    REQUIRE(direct.J_value <= oracle.J_value + 1e-3);
  }
}

TEST_CASE("oracle rejects oversized grids", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  Mesh mesh(10, s.T, s.tau);
  REQUIRE_THROWS_AS(brute_force_oracle(s, sec8_optimal_path(), mesh, -1.0, 1.0, 0.5), SweepError);
}

TEST_CASE("anchored solve reproduces the exact optimum", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  OptimizerConfig cfg;
  Mesh mesh(10, s.T, s.tau);
  SolveResult r = solve_Pk(s, sec8_optimal_path(), mesh, cfg);
  REQUIRE(r.converged);
  for (int j = 0; j <= 10; ++j) REQUIRE(r.z.a(0, j) == Catch::Approx(-0.5).margin(1e-9));
  REQUIRE(r.J_value == Catch::Approx(0.25).margin(1e-10));
}

TEST_CASE("penalty engine handles a boundary-riding optimum", "[optimizer]") {
  // Pulling the state toward 2 against the ceiling at 1 makes the optimal
  // path press into the boundary; the velocity inclusion gains active cone
  // multipliers and the interior polish must stand aside.
  ProblemSpec s = sec8_problem();
  s.terminal = TerminalCost::quadratic_form(Matrix::Identity(1, 1), Vector::Constant(1, 2.0));
  OptimizerConfig cfg;
  Mesh mesh(3, s.T, s.tau);
  SolveResult direct = solve_Pk_fixed_point(s, mesh, cfg);
  REQUIRE(direct.max_constraint_violation <= 1e-7);
  ContinuousPath anchor = direct.z.interpolate();
  SolveResult oracle = brute_force_oracle(s, anchor, mesh, -3.0, 1.0, 2.5e-2,
                                          /*pin_initial_controls=*/false);
  REQUIRE(direct.J_value <= oracle.J_value + 1e-3);
  for (int j = 0; j <= 3; ++j) REQUIRE(direct.z.x(0, j) <= direct.z.u(0, j) + 1e-9);
}

TEST_CASE("penalty merit decreases over the rho ladder", "[optimizer]") {
  ProblemSpec s = sec8_problem();
  s.terminal = TerminalCost::quadratic_form(Matrix::Identity(1, 1), Vector::Constant(1, 2.0));
  Mesh mesh(5, s.T, s.tau);
  ContinuousPath guess = catching_up_integrate(s, constant_controls(s), mesh.k);
  DiscreteTriple z0 = DiscreteTriple::sample(guess, mesh);
  detail::PinMask pins{false, false};
  detail::Objective obj = detail::bolza_objective(s);
  OptimizerConfig cfg;
  for (double rho : {1.0, 10.0, 100.0}) {
    double before = obj.value(z0) + detail::penalty_terms(z0, s, rho).value;
    OptimizerConfig one = cfg;
    one.max_outer = 1;
    one.rho0 = rho;
    detail::EngineResult eng = detail::minimize_penalized(obj, z0, s, 0.0, pins, one, 1e-9, 1e-9);
    double after = obj.value(eng.z) + detail::penalty_terms(eng.z, s, rho).value;
    REQUIRE(after <= before + 1e-12);
  }
}

TEST_CASE("convergence study on the time-varying instance", "[optimizer]") {
  ProblemSpec s = lq_problem();
  ContinuousPath exact = lq_exact_path();
  OptimizerConfig cfg;
  ConvergenceStudy study = convergence_study(s, exact, {10, 20, 40, 80}, cfg);
  REQUIRE(study.rows.size() == 4);
  REQUIRE(study.nonincreasing);
  for (size_t i = 0; i + 1 < study.rows.size(); ++i)
    REQUIRE(study.rows[i + 1].e52_sum < study.rows[i].e52_sum);
  REQUIRE(study.rows.back().e52_sum <= 1e-6);
  REQUIRE(study.rows.back().e52_sum <= 0.5 * study.rows.front().e52_sum);
  for (const auto& row : study.rows) {
    REQUIRE(row.solver_converged);
    REQUIRE(row.e50_first <= row.mu_tilde + 1e-9);
  }
}

TEST_CASE("convergence study is identically zero on a constant-control instance",
          "[optimizer]") {
  ProblemSpec s = sec8_problem();
  OptimizerConfig cfg;
  ConvergenceStudy study = convergence_study(s, sec8_optimal_path(), {10, 20, 40}, cfg);
  REQUIRE(study.nonincreasing);
  for (const auto& row : study.rows) REQUIRE(row.e52_sum <= 1e-10);
}

TEST_CASE("solver feasibility residuals stay within tolerance", "[optimizer]") {
  ProblemSpec s = lq_problem();
  OptimizerConfig cfg;
  Mesh mesh(20, s.T, s.tau);
  SolveResult r = solve_Pk(s, lq_exact_path(), mesh, cfg);
  REQUIRE(r.converged);
  REQUIRE(r.residuals.max_value("velocity_inclusion") <= 1e-8);
  REQUIRE(r.residuals.max_value("mixed") <= 1e-9);
  REQUIRE(r.residuals.max_value("u_norm_equality") <= 1e-9);
  REQUIRE(r.J_value == Catch::Approx(cost_Jk(r.z, lq_exact_path(), s,
                                             mu_constants(lq_exact_path(), s, mesh).mu_tilde))
                           .margin(1e-12));
}

TEST_CASE("optimizer config validation", "[optimizer]") {
  OptimizerConfig cfg;
  cfg.rho_growth = 0.5;
  REQUIRE_THROWS_AS(cfg.validate(), SweepError);
}
