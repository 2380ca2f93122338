#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace sweep;
using sweep::testing::sec8_problem;
using sweep::testing::sec8_optimal_path;

namespace {

/// Smooth strictly interior reference for the worked problem family,
/// integrated from the exact flow so the inclusion holds at every node.
ContinuousPath smooth_interior_reference(const ProblemSpec& spec, double amp, double freq,
                                         int nodes) {
  Vector times(nodes + 1);
  Matrix X(spec.n(), nodes + 1), U(spec.n(), nodes + 1), A(spec.d(), nodes + 1);
  Vector x = spec.x0;
  for (int j = 0; j <= nodes; ++j) {
    double t = spec.T * j / nodes;
    times[j] = t;
    U.col(j) = spec.u0;
    A.col(j) = spec.a0 + Vector::Constant(spec.d(), amp * std::sin(freq * t));
    X.col(j) = x;
    if (j < nodes) {
      // One RK4 step of xdot = -f(x, a(t)).
      double h = spec.T / nodes;
      auto rhs = [&](const Vector& xx, double tt) {
        return (-spec.f.eval(xx, spec.a0 + Vector::Constant(spec.d(), amp * std::sin(freq * tt))))
            .eval();
      };
      Vector k1 = rhs(x, t);
      Vector k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h);
      Vector k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h);
      Vector k4 = rhs(x + h * k3, t + h);
      x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
  }
  return ContinuousPath(times, X, U, A);
}

}  // namespace

TEST_CASE("mesh band indices", "[approximation]") {
  Mesh m0(10, 1.0, 0.0);
  REQUIRE(m0.j_tau == 0);
  REQUIRE(m0.j_tau_upper == 10);
  Mesh m1(10, 1.0, 0.25);
  REQUIRE(m1.j_tau == 3);       // smallest j with t_j >= 0.25
  REQUIRE(m1.j_tau_upper == 7); // largest j with t_j <= 0.75
  REQUIRE(m1.equality_band(3));
  REQUIRE_FALSE(m1.equality_band(2));
}

TEST_CASE("error constants from reference difference quotients", "[approximation]") {
  ProblemSpec s = sec8_problem();  // K = 0

  // Piecewise-linear reference sampled on its own mesh: quotients match the
  // derivative and mu hits the floor.
  Mesh mesh(4, 1.0, 0.0);
  MuConstants c0 = mu_constants(sec8_optimal_path(), s, mesh);
  REQUIRE(c0.mu == Catch::Approx(1e-12));
  REQUIRE(c0.eps_k == Catch::Approx(2.0 * mesh.h * c0.mu).margin(1e-25));

  // Crafted kink: quotient 1 over [0,1] against right-derivative 2 gives
  // mu = 1, and with K = 0 the statement constant is max{3, 8} = 8.
  Vector times(3);
  times << 0.0, 0.5, 1.0;
  Matrix X(1, 3), U(1, 3), A(1, 3);
  X << 0.0, 1.0, 1.0;
  U << 1.0, 1.0, 1.0;
  A << 0.0, 0.0, 0.0;
  ContinuousPath kink(times, X, U, A);
  MuConstants c1 = mu_constants(kink, s, Mesh(1, 1.0, 0.0));
  REQUIRE(c1.mu == Catch::Approx(1.0));
  REQUIRE(c1.mu_tilde == Catch::Approx(8.0));
  REQUIRE(c1.mu_tilde_alt == Catch::Approx(5.0));

  // eps_k substitution at mu = 1, K = 1, h = 0.1.
  ProblemSpec s1 = sec8_problem();
  s1.f.lipschitz_K = 1.0;
  double h = 0.1;
  MuConstants c2;
  c2.mu = 1.0;
  REQUIRE(2.0 * h * c2.mu * std::exp(1.0) == Catch::Approx(0.2 * std::exp(1.0)));
  MuConstants c3 = mu_constants(kink, s1, Mesh(1, 1.0, 0.0));
  REQUIRE(c3.eps_k == Catch::Approx(2.0 * 1.0 * 1.0 * std::exp(1.0)));
}

TEST_CASE("construction is a fixed point on matching discrete solutions", "[approximation]") {
  ProblemSpec s = sec8_problem();
  int k = 16;
  Mesh mesh(k, s.T, s.tau);
  ContinuousPath controls = constant_controls(s);
  ContinuousPath traj = catching_up_integrate(s, controls, k);  // interior flow
  auto [z, rep] = approximate_feasible(traj, s, mesh);
  REQUIRE(rep.max_state_gap <= 1e-9);
  REQUIRE(rep.max_renorm_shift == 0.0);
  // Identity x^k - u^k = xbar - ubar.
  for (int j = 0; j <= k; ++j) {
    Vector lhs = z.x.col(j) - z.u.col(j);
    Vector rhs = traj.x(mesh.time(j)) - traj.u(mesh.time(j));
    REQUIRE((lhs - rhs).norm() <= 1e-13);
  }
  // All discrete constraints hold tightly for the zero-drift construction.
  ResidualTable t = check_discrete_constraints(z, traj, s, rep.constants.eps_k,
                                               rep.constants.mu_tilde, 0.5);
  REQUIRE(t.max_value("velocity_inclusion") <= 1e-8);
  REQUIRE(t.max_value("u_norm_equality") <= 1e-8);
  REQUIRE(t.max_value("mixed") <= 1e-9);
}

TEST_CASE("interior half-speed reference reproduces itself", "[approximation]") {
  ProblemSpec s = sec8_problem();
  Mesh mesh(8, s.T, s.tau);
  auto [z, rep] = approximate_feasible(sec8_optimal_path(), s, mesh);
  REQUIRE(rep.max_state_gap <= 1e-12);
  for (int j = 0; j <= 8; ++j) REQUIRE(z.x(0, j) == Catch::Approx(mesh.time(j) / 2).margin(1e-12));
}

TEST_CASE("state gap obeys the construction bound on smooth references", "[approximation]") {
  ProblemSpec s = sec8_problem();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> amp(0.1, 0.4), freq(1.0, 5.0);
  for (int rep_i = 0; rep_i < 6; ++rep_i) {
    ContinuousPath ref = smooth_interior_reference(s, amp(rng), freq(rng), 320);
    double gap20, gap40;
    for (int k : {20, 40}) {
      Mesh mesh(k, s.T, s.tau);
      auto [z, rep] = approximate_feasible(ref, s, mesh, /*precondition_tol=*/5e-3);
      REQUIRE(rep.max_state_gap <= rep.constants.eps_k + 1e-12);
      REQUIRE(rep.variation_of_u_dot <= rep.constants.mu_tilde + 1e-12);
      REQUIRE(rep.first_u_quotient <= rep.constants.mu_tilde + 1e-12);
      (k == 20 ? gap20 : gap40) = rep.max_state_gap;
    }
    if (gap20 > 1e-12) REQUIRE(gap40 < gap20);
  }
}

TEST_CASE("initial velocity and W12 gaps decrease along the mesh ladder", "[approximation]") {
  ProblemSpec s = sec8_problem();
  ContinuousPath ref = smooth_interior_reference(s, 0.3, 3.0, 640);
  double prev_iv = std::numeric_limits<double>::infinity();
  double prev_w12 = std::numeric_limits<double>::infinity();
  for (int k : {10, 20, 40, 80}) {
    Mesh mesh(k, s.T, s.tau);
    auto [z, rep] = approximate_feasible(ref, s, mesh, /*precondition_tol=*/5e-3);
    REQUIRE(rep.initial_velocity_gap <= prev_iv + 1e-12);
    REQUIRE(rep.w12_velocity_gap < prev_w12 + 1e-12);
    prev_iv = rep.initial_velocity_gap;
    prev_w12 = rep.w12_velocity_gap;
  }
}

TEST_CASE("infeasible references are rejected with details", "[approximation]") {
  ProblemSpec s = sec8_problem();
  Vector times(2);
  times << 0.0, 1.0;
  Matrix X(1, 2), U(1, 2), A(1, 2);
  X << 0.0, 2.0;  // exits the moving set
  U << 1.0, 1.0;
  A << -0.5, -0.5;
  ContinuousPath bad(times, X, U, A);
  REQUIRE_THROWS_WITH(approximate_feasible(bad, s, Mesh(4, 1.0, 0.0)),
                      Catch::Matchers::ContainsSubstring("reference infeasible"));
}

TEST_CASE("discrete cost evaluation", "[approximation]") {
  ProblemSpec s = sec8_problem();

  // Sampled reference: all penalty blocks vanish.
  ContinuousPath ref = sec8_optimal_path();
  Mesh mesh(5, s.T, s.tau);
  DiscreteTriple z = DiscreteTriple::sample(ref, mesh);
  MuConstants c = mu_constants(ref, s, mesh);
  CostBreakdown bd = cost_Jk_breakdown(z, ref, s, c.mu_tilde);
  REQUIRE(bd.initial_velocity <= 1e-24);
  REQUIRE(bd.proximity <= 1e-24);
  REQUIRE(bd.u_quotient_penalty == 0.0);
  REQUIRE(bd.u_variation_penalty == 0.0);
  REQUIRE(bd.total() == Catch::Approx(bd.terminal + bd.running));

  // Self-anchored evaluation at k = 1 with the stationary control.
  Mesh m1(1, s.T, s.tau);
  auto r = example81_solve(s, 1, Example81Mode::fixed_point);
  double J = cost_Jk(r.z, r.reference, s, mu_constants(r.reference, s, m1).mu_tilde);
  REQUIRE(J == Catch::Approx(0.25).margin(1e-12));

  // Distance penalty: second-difference total mu_tilde + 0.5 contributes 0.25.
  Mesh m2(2, 1.0, 0.0);
  DiscreteTriple zz;
  zz.mesh = m2;
  zz.x = Matrix::Zero(1, 3);
  zz.a = Matrix::Zero(1, 3);
  zz.u.resize(1, 3);
  zz.u << 1.0, 1.0, 1.5;  // single second difference of norm 2/h^2 ... evaluated below
  double var = (zz.du(1) - zz.du(0)).norm();
  ProblemSpec s0 = sec8_problem();
  s0.terminal = TerminalCost::quadratic_form(Matrix::Zero(1, 1), Vector::Zero(1));
  s0.running = RunningCost::zero(1, 1);
  CostBreakdown bd2 = cost_Jk_breakdown(zz, zz.interpolate(), s0, var - 0.5);
  REQUIRE(bd2.u_variation_penalty == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("tampered constraints report their exact residual", "[approximation]") {
  ProblemSpec s = sec8_problem();
  Mesh mesh(4, s.T, s.tau);
  auto r = example81_solve(s, 4, Example81Mode::fixed_point);
  DiscreteTriple z = r.z;
  double delta = 0.3;
  z.x(0, 4) = z.u(0, 4) + delta;  // violate the terminal mixed constraint by delta
  ResidualTable t = check_discrete_constraints(z, r.reference, s, 1e-6, 8.0, 0.5);
  REQUIRE(t.max_value("terminal_mixed") == Catch::Approx(delta).margin(1e-12));

  DiscreteTriple z2 = r.z;
  z2.u(0, 2) = 1.25;  // break the norm equality
  ResidualTable t2 = check_discrete_constraints(z2, r.reference, s, 1e-6, 8.0, 0.5);
  REQUIRE(t2.max_value("u_norm_equality") == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("analytic cost gradient matches central differences", "[approximation]") {
  ProblemSpec s = sec8_problem();
  int k = 10;
  Mesh mesh(k, s.T, s.tau);
  ContinuousPath ref = sec8_optimal_path();
  MuConstants c = mu_constants(ref, s, mesh);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 3; ++trial) {
    DiscreteTriple z = DiscreteTriple::sample(ref, mesh);
    for (int j = 0; j <= k; ++j) {
      z.a(0, j) += 0.3 * nd(rng);
      if (j > 0) z.x(0, j) += 0.1 * nd(rng);
    }
    CostGradient g = gradient_Jk(z, ref, s, c.mu_tilde);
    const double step = 1e-6;
    auto fd = [&](Matrix& block, int row, int col, const Matrix& gblock) {
      double saved = block(row, col);
      block(row, col) = saved + step;
      double fp = cost_Jk(z, ref, s, c.mu_tilde);
      block(row, col) = saved - step;
      double fm = cost_Jk(z, ref, s, c.mu_tilde);
      block(row, col) = saved;
      double num = (fp - fm) / (2 * step);
      REQUIRE(gblock(row, col) == Catch::Approx(num).margin(1e-6 * std::max(1.0, std::abs(num))));
    };
    for (int j = 0; j <= k; ++j) {
      fd(z.x, 0, j, g.gx);
      fd(z.u, 0, j, g.gu);
      fd(z.a, 0, j, g.ga);
    }
  }
}
