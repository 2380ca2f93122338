#include <catch2/catch_amalgamated.hpp>

#include "sweep/serialization.hpp"
#include "test_helpers.hpp"

using namespace sweep;
using sweep::testing::sec8_problem;

TEST_CASE("problem files load and validate", "[serialization]") {
  json j = to_json(sec8_problem());
  ProblemSpec s = problem_from_json(j);
  REQUIRE(s.n() == 1);
  REQUIRE(s.r == 1.0);
  REQUIRE(s.f.B(0, 0) == 1.0);
  REQUIRE(s.running.Qa(0, 0) == 1.0);
  s.validate();

  // Infeasible initial state names the constraint.
  json bad = j;
  bad["x0"] = {2.0};
  REQUIRE_THROWS_WITH(problem_from_json(bad), Catch::Matchers::ContainsSubstring("x0 infeasible"));

  // Band parameter beyond min{r, T}.
  json bad_tau = j;
  bad_tau["tau"] = 1.5;
  REQUIRE_THROWS_WITH(problem_from_json(bad_tau), Catch::Matchers::ContainsSubstring("tau"));

  // Zero generator.
  json bad_gen = j;
  bad_gen["generators"] = {{0.0}};
  REQUIRE_THROWS_WITH(problem_from_json(bad_gen), Catch::Matchers::ContainsSubstring("generators"));

  // Missing field.
  json missing = j;
  missing.erase("r");
  REQUIRE_THROWS_WITH(problem_from_json(missing), Catch::Matchers::ContainsSubstring("'r'"));
}

TEST_CASE("triple and certificate round-trip through JSON", "[serialization]") {
  ProblemSpec s = sec8_problem();
  auto r = example81_solve(s, 6, Example81Mode::fixed_point);

  DiscreteTriple z2 = triple_from_json(to_json(r.z), s.tau);
  REQUIRE((z2.x - r.z.x).norm() == 0.0);
  REQUIRE((z2.u - r.z.u).norm() == 0.0);
  REQUIRE((z2.a - r.z.a).norm() == 0.0);
  REQUIRE(z2.mesh.k == r.z.mesh.k);

  DualCertificate c2 = certificate_from_json(to_json(r.cert));
  REQUIRE(c2.lambda == r.cert.lambda);
  REQUIRE((c2.p_x - r.cert.p_x).norm() == 0.0);
  REQUIRE((c2.theta_a - r.cert.theta_a).norm() == 0.0);
  REQUIRE((c2.chi - r.cert.chi).norm() == 0.0);

  ResidualReport rep = residual_explicit(z2, c2, r.reference, s, 1e-8);
  REQUIRE(rep.pass);
}

TEST_CASE("trajectory paths round-trip through JSON", "[serialization]") {
  ContinuousPath p = sweep::testing::sec8_optimal_path();
  ContinuousPath q = path_from_json(to_json(p));
  REQUIRE((q.times() - p.times()).norm() == 0.0);
  REQUIRE((q.x_nodes() - p.x_nodes()).norm() == 0.0);
}

TEST_CASE("json serialization is deterministic", "[serialization]") {
  ProblemSpec s = sec8_problem();
  auto r = example81_solve(s, 5, Example81Mode::fixed_point);
  std::string once = to_json(r.cert).dump(2);
  std::string twice = to_json(r.cert).dump(2);
  REQUIRE(once == twice);
}

TEST_CASE("trajectory csv carries full-precision columns", "[serialization]") {
  ContinuousPath p = sweep::testing::sec8_optimal_path();
  std::string path = "test_traj_tmp.csv";
  write_trajectory_csv(p, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "t,x1,u1,a1");
  std::string row;
  std::getline(in, row);
  REQUIRE(row.substr(0, 2) == "0,");
  std::remove(path.c_str());
}
