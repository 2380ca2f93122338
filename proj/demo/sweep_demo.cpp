// End-to-end tour of the library on the shipped one-dimensional problem:
// simulate the dynamics, build a feasible discrete approximation, solve the
// discrete control problem, and verify the optimality certificate.

#include <iostream>

#include "sweep/serialization.hpp"

int main(int argc, char** argv) {
  using namespace sweep;
  std::string path = argc > 1 ? argv[1] : "problems/sec8.json";
  ProblemSpec spec = load_problem(path);
  spec.validate();

  const int k = 20;
  Mesh mesh(k, spec.T, spec.tau);

  // Catching-up integration under the problem's nominal controls.
  ContinuousPath traj = catching_up_integrate(spec, constant_controls(spec), k);
  std::cout << "simulated x(T) = " << traj.x(spec.T).transpose() << "\n";

  // Feasible discrete approximation of the simulated path.
  auto [triple, report] = approximate_feasible(traj, spec, mesh);
  std::cout << "construction gap " << report.max_state_gap << " (bound "
            << report.constants.eps_k << ")\n";

  // Direct solve of the discrete problem, self-anchored.
  OptimizerConfig config;
  SolveResult solved = solve_Pk_fixed_point(spec, mesh, config, &traj);
  std::cout << "J = " << solved.J_value << ", converged = " << solved.converged << "\n";

  // Multiplier recovery and certificate verification at the solution.
  ContinuousPath anchor = solved.z.interpolate();
  DualCertificate cert = recover_multipliers(solved.z, anchor, spec);
  ResidualReport residuals = residual_explicit(solved.z, cert, anchor, spec, 1e-6);
  std::cout << "certificate " << (residuals.pass ? "PASS" : "FAIL") << " (max residual "
            << residuals.max_residual() << ")\n";
  return residuals.pass ? 0 : 1;
}
