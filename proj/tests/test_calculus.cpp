#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace sweep;

namespace {

ProblemSpec plane_spec(const Matrix& gens_cols) {
  ProblemSpec s;
  s.C = GeneratorSet(gens_cols);
  int n = s.C.dim();
  s.f = PerturbationField::affine(Matrix::Zero(n, n), Matrix::Identity(n, n), Vector::Zero(n));
  s.x0 = Vector::Zero(n);
  s.u0 = Vector::Zero(n);
  s.a0 = Vector::Zero(n);
  s.terminal = TerminalCost::quadratic_form(Matrix::Zero(n, n), Vector::Zero(n));
  s.running = RunningCost::zero(n, n);
  return s;
}

Vector v1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("coderivative family structure", "[calculus]") {
  // Interior point: the family is the singleton of derivative transposes.
  Matrix G(1, 1);
  G << 1.0;
  ProblemSpec s = plane_spec(G);
  Matrix A(1, 1), B(1, 1);
  A << 2.0;
  B << 3.0;
  s.f = PerturbationField::affine(A, B, Vector::Zero(1));
  {
    CoderivativeFamily fam(v1(-1.0), v1(0.0), v1(0.0), s.f.eval(v1(-1.0), v1(0.0)), s, v1(1.5));
    auto mem = fam.contains(v1(2.0 * 1.5), v1(0.0), v1(3.0 * 1.5));
    REQUIRE(mem.contains);
    auto bad = fam.contains(v1(2.0 * 1.5 + 0.3), v1(0.0), v1(3.0 * 1.5));
    REQUIRE_FALSE(bad.contains);
    REQUIRE(bad.residual == Catch::Approx(0.3).margin(1e-12));
  }

  // Boundary point with f = a: positive direction makes the multiplier
  // nonnegative, the zero direction leaves it free.
  ProblemSpec s0 = plane_spec(G);
  {
    CoderivativeFamily fam(v1(0.0), v1(0.0), v1(0.0), v1(0.0), s0, v1(1.0));
    REQUIRE(fam.partition().pos_part == IndexSet{0});
    for (double g : {0.0, 0.7, 3.1}) REQUIRE(fam.contains(v1(g), v1(-g), v1(1.0)).contains);
    REQUIRE_FALSE(fam.contains(v1(-0.5), v1(0.5), v1(1.0)).contains);   // sign violation
    REQUIRE_FALSE(fam.contains(v1(0.5), v1(0.5), v1(1.0)).contains);    // structure violation
  }
  {
    CoderivativeFamily fam(v1(0.0), v1(0.0), v1(0.0), v1(0.0), s0, v1(0.0));
    REQUIRE(fam.partition().zero_part == IndexSet{0});
    for (double g : {-2.0, 0.0, 2.0}) REQUIRE(fam.contains(v1(g), v1(-g), v1(0.0)).contains);
  }
}

TEST_CASE("family elements satisfy the structural identity", "[calculus]") {
  Matrix G(2, 2);
  G << 1, 0, 0, 1;
  ProblemSpec s = plane_spec(G);
  Matrix A(2, 2);
  A << 1, 2, 0, 1;
  s.f = PerturbationField::affine(A, Matrix::Identity(2, 2), Vector::Zero(2));
  Vector y(2);
  y << 0.4, -0.2;
  CoderivativeFamily fam(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2),
                         s.f.eval(Vector::Zero(2), Vector::Zero(2)), s, y);
  std::mt19937_64 rng(3);
  for (const auto& el : fam.sample(64, rng)) {
    Vector lhs = el[0] + el[1];
    Vector rhs = A.transpose() * y;
    REQUIRE((lhs - rhs).norm() <= 1e-12);
    REQUIRE(fam.contains(el[0], el[1], el[2]).contains);
  }
}

TEST_CASE("graph normal oracle on the scalar halfline", "[calculus]") {
  Matrix G(1, 1);
  G << 1.0;
  GeneratorSet C(G);

  GraphNormalOracle inner(v1(-1.0), v1(0.0), C);
  REQUIRE(inner.contains(v1(0.0), v1(123.0), 1e-9));
  REQUIRE_FALSE(inner.contains(v1(1e-3), v1(0.0), 1e-9));

  GraphNormalOracle ray(v1(0.0), v1(1.0), C);
  REQUIRE(ray.contains(v1(-5.0), v1(0.0), 1e-9));
  REQUIRE(ray.contains(v1(5.0), v1(0.0), 1e-9));
  REQUIRE_FALSE(ray.contains(v1(0.0), v1(1e-3), 1e-9));

  GraphNormalOracle corner(v1(0.0), v1(0.0), C);
  REQUIRE(corner.contains(v1(1.0), v1(-1.0), 1e-9));
  REQUIRE(corner.contains(v1(0.0), v1(4.0), 1e-9));
  REQUIRE(corner.contains(v1(-2.0), v1(0.0), 1e-9));
  REQUIRE_FALSE(corner.contains(v1(-1.0), v1(1.0), 1e-9));
  REQUIRE_FALSE(corner.contains(v1(1.0), v1(1.0), 1e-9));
  REQUIRE(corner.distance(v1(1.0), v1(1.0)) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("coderivative equality on independent corner cases", "[calculus]") {
  // Scalar halfline corner.
  Matrix G1(1, 1);
  G1 << 1.0;
  ProblemSpec s1 = plane_spec(G1);
  auto r1 = coderivative_equality_check(Vector::Zero(1), Vector::Zero(1), Vector::Zero(1),
                                        Vector::Zero(1), s1, 48);
  REQUIRE(r1.independent);
  REQUIRE(r1.forward_violation <= 1e-9);
  REQUIRE(r1.reverse_violation <= 1e-9);
  REQUIRE(r1.sampled_directions >= 40);

  // Orthogonal planar corner.
  Matrix G2(2, 2);
  G2 << 1, 0, 0, 1;
  ProblemSpec s2 = plane_spec(G2);
  auto r2 = coderivative_equality_check(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2),
                                        Vector::Zero(2), s2, 48);
  REQUIRE(r2.independent);
  REQUIRE(r2.forward_violation <= 1e-9);
  REQUIRE(r2.reverse_violation <= 1e-9);

  // Off-corner boundary point with a perturbation gradient.
  ProblemSpec s3 = plane_spec(G2);
  Matrix A(2, 2);
  A << 0.5, 0.1, 0.0, 0.4;
  s3.f = PerturbationField::affine(A, Matrix::Identity(2, 2), Vector::Zero(2));
  Vector x(2);
  x << 0.0, -1.0;  // only the first constraint active
  auto r3 = coderivative_equality_check(x, Vector::Zero(2), Vector::Zero(2), s3.f.eval(x, Vector::Zero(2)),
                                        s3, 48);
  REQUIRE(r3.independent);
  REQUIRE(r3.forward_violation <= 1e-9);
  REQUIRE(r3.reverse_violation <= 1e-9);
}

TEST_CASE("dependent generators keep the one-sided estimate", "[calculus]") {
  Matrix G(2, 3);
  double s2 = std::sqrt(0.5);
  G << 1, 0, s2, 0, 1, s2;  // third generator in the span of the first two
  ProblemSpec s = plane_spec(G);
  auto r = coderivative_equality_check(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2),
                                       Vector::Zero(2), s, 32);
  REQUIRE_FALSE(r.independent);
  REQUIRE(r.forward_violation <= 1e-9);  // oracle elements always inside the family
  REQUIRE(r.reverse_violation == 0.0);   // exactness is not claimed, not tested
}

TEST_CASE("oracle elements are accepted across random tiny polyhedra", "[calculus]") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  for (int inst = 0; inst < 6; ++inst) {
    int m = 1 + static_cast<int>(rng() % 2);
    GeneratorSet C = sweep::testing::random_generators(2, m, rng);
    ProblemSpec s = plane_spec(C.columns());
    // Velocity with nonnegative multipliers on all generators.
    Vector w = Vector::Zero(2);
    for (int i = 0; i < m; ++i) w += std::abs(nd(rng)) * C.generator(i);
    auto r = coderivative_equality_check(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2), w, s,
                                         24, 100 + inst);
    REQUIRE(r.forward_violation <= 1e-9);
  }
}

TEST_CASE("domain pattern filters directions against positive multipliers", "[calculus]") {
  Matrix G(1, 1);
  G << 1.0;
  ProblemSpec s = plane_spec(G);
  // w = 1 has a strictly positive multiplier, so admissible directions are
  // orthogonal to the generator.
  CoderivativeFamily fam(v1(0.0), v1(0.0), v1(0.0), v1(1.0), s, v1(0.0));
  REQUIRE(fam.domain_pattern_ok());
  CoderivativeFamily fam2(v1(0.0), v1(0.0), v1(0.0), v1(1.0), s, v1(0.5));
  REQUIRE_FALSE(fam2.domain_pattern_ok());
}
