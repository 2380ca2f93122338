#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "sweep/polyhedral_geometry.hpp"

namespace sweep {

/// Piecewise-linear path t -> (x(t), u(t), a(t)) on a strictly increasing
/// time grid spanning [0, T]. Derivatives are piecewise constant and taken
/// right-continuous; the final interval's slope extends to t = T.
class ContinuousPath {
 public:
  ContinuousPath() = default;
  ContinuousPath(Vector times, Matrix x_nodes, Matrix u_nodes, Matrix a_nodes)
      : t_(std::move(times)), x_(std::move(x_nodes)), u_(std::move(u_nodes)), a_(std::move(a_nodes)) {
    const int N = static_cast<int>(t_.size());
    require(N >= 2, "ContinuousPath: need at least two time nodes");
    for (int j = 0; j + 1 < N; ++j)
      require(t_[j + 1] > t_[j], "ContinuousPath: times must be strictly increasing");
    require(x_.cols() == N && u_.cols() == N && a_.cols() == N,
            "ContinuousPath: node count mismatch");
  }

  int segments() const { return static_cast<int>(t_.size()) - 1; }
  double t_begin() const { return t_[0]; }
  double t_end() const { return t_[t_.size() - 1]; }
  const Vector& times() const { return t_; }
  const Matrix& x_nodes() const { return x_; }
  const Matrix& u_nodes() const { return u_; }
  const Matrix& a_nodes() const { return a_; }
  int state_dim() const { return static_cast<int>(x_.rows()); }
  int shift_dim() const { return static_cast<int>(u_.rows()); }
  int control_dim() const { return static_cast<int>(a_.rows()); }

  Vector x(double t) const { return eval(x_, t); }
  Vector u(double t) const { return eval(u_, t); }
  Vector a(double t) const { return eval(a_, t); }

  Vector x_dot(double t) const { return slope(x_, cell(t)); }
  Vector u_dot(double t) const { return slope(u_, cell(t)); }
  Vector a_dot(double t) const { return slope(a_, cell(t)); }

  /// Index of the interval [t_j, t_{j+1}) containing t (right-continuous).
  int cell(double t) const {
    const int N = static_cast<int>(t_.size());
    if (t <= t_[0]) return 0;
    if (t >= t_[N - 2]) return N - 2;
    int lo = 0, hi = N - 2;
    while (lo < hi) {
      int mid = (lo + hi + 1) / 2;
      if (t_[mid] <= t)
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }

  /// Total variation of du/dt over [0, t]: sum of ||u'|| * dt over cells.
  double u_dot_arclength(double t) const {
    double acc = 0.0;
    for (int j = 0; j < segments(); ++j) {
      double lo = t_[j], hi = std::min(t, t_[j + 1]);
      if (hi <= lo) break;
      acc += slope(u_, j).norm() * (hi - lo);
    }
    return acc;
  }

 private:
  Vector eval(const Matrix& nodes, double t) const {
    int j = cell(t);
    double tc = std::min(std::max(t, t_begin()), t_end());
    double w = (tc - t_[j]) / (t_[j + 1] - t_[j]);
    return (1.0 - w) * nodes.col(j) + w * nodes.col(j + 1);
  }
  Vector slope(const Matrix& nodes, int j) const {
    return (nodes.col(j + 1) - nodes.col(j)) / (t_[j + 1] - t_[j]);
  }

  Vector t_;
  Matrix x_, u_, a_;
};

/// Perturbation f(x, a), affine (f = A x + B a + c) or callback-backed.
/// The declared Lipschitz and growth constants feed the error-constant
/// formulas only, never the dynamics; validation is soft.
struct PerturbationField {
  enum class Kind { affine, callback };
  Kind kind = Kind::affine;

  Matrix A;  // n x n
  Matrix B;  // n x d
  Vector c;  // n

  std::function<Vector(const Vector&, const Vector&)> f_fn;
  std::function<Matrix(const Vector&, const Vector&)> dfx_fn;  // n x n
  std::function<Matrix(const Vector&, const Vector&)> dfa_fn;  // n x d

  double lipschitz_K = 0.0;
  double growth_M = 1.0;

  static PerturbationField affine(Matrix A_, Matrix B_, Vector c_) {
    PerturbationField f;
    f.A = std::move(A_);
    f.B = std::move(B_);
    f.c = std::move(c_);
    f.lipschitz_K = f.A.operatorNorm();
    return f;
  }

  Vector eval(const Vector& x, const Vector& a) const {
    if (kind == Kind::affine) return A * x + B * a + c;
    return f_fn(x, a);
  }
  Matrix grad_x(const Vector& x, const Vector& a) const {
    if (kind == Kind::affine) return A;
    require(static_cast<bool>(dfx_fn), "PerturbationField: no x-derivative callback");
    return dfx_fn(x, a);
  }
  Matrix grad_a(const Vector& x, const Vector& a) const {
    if (kind == Kind::affine) return B;
    require(static_cast<bool>(dfa_fn), "PerturbationField: no a-derivative callback");
    return dfa_fn(x, a);
  }
  bool smooth() const { return kind == Kind::affine || (dfx_fn && dfa_fn); }

  /// Checks the declared K against ||A|| and M against samples of
  /// ||f(x,a)|| <= M(1 + ||x||) over a box; returns warning strings.
  std::vector<std::string> validate(int n, int d, double box = 10.0) const {
    std::vector<std::string> warnings;
    if (kind == Kind::affine && lipschitz_K < A.operatorNorm() - 1e-12)
      warnings.push_back("declared lipschitz_K below ||A||");
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> dist(-box, box);
    for (int s = 0; s < 200; ++s) {
      Vector x(n), a(d);
      for (int i = 0; i < n; ++i) x[i] = dist(rng);
      for (int i = 0; i < d; ++i) a[i] = dist(rng) / 4.0;
      if (eval(x, a).norm() > growth_M * (1.0 + x.norm()) + 1e-9) {
        warnings.push_back("growth bound M(1+||x||) violated on sampled box");
        break;
      }
    }
    return warnings;
  }
};

/// Terminal cost: quadratic (x - x_target)' Q (x - x_target) / 2 or callback.
struct TerminalCost {
  bool quadratic = true;
  Matrix Q;
  Vector x_target;
  std::function<double(const Vector&)> phi_fn;
  std::function<Vector(const Vector&)> grad_fn;

  static TerminalCost quadratic_form(Matrix Q_, Vector target) {
    TerminalCost c;
    c.Q = std::move(Q_);
    c.x_target = std::move(target);
    return c;
  }
  double value(const Vector& x) const {
    if (quadratic) return 0.5 * (x - x_target).dot(Q * (x - x_target));
    return phi_fn(x);
  }
  Vector gradient(const Vector& x, double fd_step = 1e-6) const {
    if (quadratic) return Q * (x - x_target);
    if (grad_fn) return grad_fn(x);
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) {
      Vector e = Vector::Zero(x.size());
      e[i] = fd_step;
      g[i] = (phi_fn(x + e) - phi_fn(x - e)) / (2 * fd_step);
    }
    return g;
  }
};

/// Running cost, quadratic catalog
///   l = 1/2 (x'Qx x + u'Qu u + a'Qa a + xd'Rx xd + ud'Ru ud + ad'Ra ad)
///       + qx'x + qu'u + qa'a + rx'xd + ru'ud + ra'ad + c0
/// or a callback l(t, x, u, a, xd, ud, ad). Convexity in the velocity slots
/// is required; for the catalog that means PSD R-blocks.
struct RunningCost {
  bool quadratic = true;
  Matrix Qx, Qu, Qa, Rx, Ru, Ra;
  Vector qx, qu, qa, rx, ru, ra;
  double c0 = 0.0;
  std::function<double(double, const Vector&, const Vector&, const Vector&, const Vector&,
                       const Vector&, const Vector&)>
      ell_fn;

  static RunningCost zero(int n, int d) {
    RunningCost c;
    c.Qx = Matrix::Zero(n, n);
    c.Qu = Matrix::Zero(n, n);
    c.Qa = Matrix::Zero(d, d);
    c.Rx = Matrix::Zero(n, n);
    c.Ru = Matrix::Zero(n, n);
    c.Ra = Matrix::Zero(d, d);
    c.qx = Vector::Zero(n);
    c.qu = Vector::Zero(n);
    c.qa = Vector::Zero(d);
    c.rx = Vector::Zero(n);
    c.ru = Vector::Zero(n);
    c.ra = Vector::Zero(d);
    return c;
  }

  double value(double t, const Vector& x, const Vector& u, const Vector& a, const Vector& xd,
               const Vector& ud, const Vector& ad) const {
    if (!quadratic) return ell_fn(t, x, u, a, xd, ud, ad);
    return 0.5 * (x.dot(Qx * x) + u.dot(Qu * u) + a.dot(Qa * a) + xd.dot(Rx * xd) +
                  ud.dot(Ru * ud) + ad.dot(Ra * ad)) +
           qx.dot(x) + qu.dot(u) + qa.dot(a) + rx.dot(xd) + ru.dot(ud) + ra.dot(ad) + c0;
  }

  // Gradients with respect to the position and velocity slots.
  Vector grad_x(const Vector& x) const { return Qx * x + qx; }
  Vector grad_u(const Vector& u) const { return Qu * u + qu; }
  Vector grad_a(const Vector& a) const { return Qa * a + qa; }
  Vector grad_xd(const Vector& xd) const { return Rx * xd + rx; }
  Vector grad_ud(const Vector& ud) const { return Ru * ud + ru; }
  Vector grad_ad(const Vector& ad) const { return Ra * ad + ra; }
};

/// Full problem description: polyhedron, perturbation, initial state, the
/// norm-constraint radius r, horizon T, band parameter tau and the two costs.
/// u0/a0 are the reference initial controls pinned by the discrete dynamics.
struct ProblemSpec {
  GeneratorSet C;
  PerturbationField f;
  Vector x0;
  Vector u0;
  Vector a0;
  double r = 1.0;
  double T = 1.0;
  double tau = 0.0;
  TerminalCost terminal;
  RunningCost running;

  int n() const { return C.dim(); }
  int d() const { return static_cast<int>(a0.size()); }

  /// Invariant check; throws with the offending field on violation.
  void validate() const {
    require(r > 0.0, "ProblemSpec.r: must be positive");
    require(T > 0.0, "ProblemSpec.T: must be positive");
    require(tau >= 0.0 && tau <= std::min(r, T) + 1e-12,
            "ProblemSpec.tau: must satisfy 0 <= tau <= min{r, T}");
    require(x0.size() == n() && u0.size() == n(), "ProblemSpec.x0/u0: dimension mismatch");
    Vector vals = C.evaluate(x0 - u0);
    for (int i = 0; i < C.count(); ++i)
      require(vals[i] <= kActiveTol,
              "ProblemSpec.x0: initial feasibility <g_" + std::to_string(i + 1) +
                  ", x0 - u0> <= 0 violated");
  }
};

struct VelocityProjection {
  Vector point;     // nearest element of N(x-u; C) + f(x, a)
  double distance;  // ||w - point||
  Vector cone_coefficients;  // lambda on active generators (size m, zeros elsewhere)
};

/// Nearest point of the sweeping velocity set N(x-u; C) + f(x, a) to w.
/// Empty-image error when x - u lies outside C.
inline VelocityProjection F_image_project(const Vector& w, const Vector& x, const Vector& u,
                                          const Vector& a, const ProblemSpec& spec,
                                          double tol = kActiveTol) {
  ActiveIndices act = active_indices(x - u, spec.C, tol);
  require(!act.outside, "F_image_project: x - u outside C, velocity set is empty");
  Vector fxa = spec.f.eval(x, a);
  Vector target = w - fxa;
  VelocityProjection out;
  out.cone_coefficients = Vector::Zero(spec.C.count());
  if (act.active.empty()) {
    out.point = fxa;
    out.distance = target.norm();
    return out;
  }
  Matrix Ga = gather_columns(spec.C, act.active);
  NnlsResult fit = nnls(Ga, target);
  out.point = fxa + Ga * fit.x;
  out.distance = (w - out.point).norm();
  for (size_t j = 0; j < act.active.size(); ++j)
    out.cone_coefficients[act.active[j]] = fit.x[static_cast<int>(j)];
  return out;
}

/// Catching-up integration of the perturbed sweeping inclusion on a uniform
/// mesh with k steps: drift explicitly by -h f, then project onto the next
/// translate C + u(t_{j+1}). Every node satisfies the mixed constraint exactly
/// (up to the projector's arithmetic).
inline ContinuousPath catching_up_integrate(const ProblemSpec& spec, const ContinuousPath& controls,
                                            int k) {
  require(k >= 1, "catching_up_integrate: step count must be >= 1");
  const int n = spec.n();
  const double h = spec.T / k;
  Vector times(k + 1);
  Matrix X(n, k + 1), U(n, k + 1), A(spec.d(), k + 1);
  for (int j = 0; j <= k; ++j) {
    times[j] = h * j;
    U.col(j) = controls.u(times[j]);
    A.col(j) = controls.a(times[j]);
  }
  X.col(0) = spec.x0;
  for (int j = 0; j < k; ++j) {
    Vector drifted = X.col(j) - h * spec.f.eval(X.col(j), A.col(j));
    X.col(j + 1) = project_translated_polyhedron(drifted, spec.C, U.col(j + 1)).point;
  }
  return ContinuousPath(times, X, U, A);
}

struct WellposednessBounds {
  double state_bound = 0.0;                 // l
  std::vector<double> velocity_bound;       // 2(1+l)M + ||u'|| per mesh interval
};

/// State and velocity bounds for the generated trajectory:
///   l = ||x0|| + e^{2MT} ( 2MT(1+||x0||) + int ||u'|| ),
///   ||x'(t)|| <= 2(1+l)M + ||u'(t)||.
inline WellposednessBounds wellposedness_bounds(const ProblemSpec& spec,
                                                const ContinuousPath& u_path) {
  const double M = spec.f.growth_M;
  const double T = spec.T;
  double udot_l1 = u_path.u_dot_arclength(u_path.t_end());
  WellposednessBounds out;
  out.state_bound =
      spec.x0.norm() + std::exp(2.0 * M * T) * (2.0 * M * T * (1.0 + spec.x0.norm()) + udot_l1);
  out.velocity_bound.resize(u_path.segments());
  for (int j = 0; j < u_path.segments(); ++j) {
    double tm = 0.5 * (u_path.times()[j] + u_path.times()[j + 1]);
    out.velocity_bound[j] = 2.0 * (1.0 + out.state_bound) * M + u_path.u_dot(tm).norm();
  }
  return out;
}

/// Verifies on random samples that the moving set C + u(t) varies in an
/// absolutely continuous way:
///   |dist(y; C+u(t)) - dist(y; C+u(s))| <= |v(t) - v(s)|,  v(t) = int_0^t ||u'||.
/// Returns the worst violation (negative means slack everywhere).
inline double moving_set_modulus_check(const ContinuousPath& u_path, const GeneratorSet& C,
                                       int samples, unsigned seed = 7u, double box = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ydist(-box, box);
  std::uniform_real_distribution<double> tdist(u_path.t_begin(), u_path.t_end());
  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Vector y(C.dim());
    for (int i = 0; i < C.dim(); ++i) y[i] = ydist(rng);
    double t = tdist(rng), tt = tdist(rng);
    double dt = distance_to_translated_polyhedron(y, C, u_path.u(t));
    double ds = distance_to_translated_polyhedron(y, C, u_path.u(tt));
    double rhs = std::abs(u_path.u_dot_arclength(t) - u_path.u_dot_arclength(tt));
    worst = std::max(worst, std::abs(dt - ds) - rhs);
  }
  return worst;
}

/// Convenience: constant-control path on [0, T].
inline ContinuousPath constant_controls(const ProblemSpec& spec) {
  Vector times(2);
  times << 0.0, spec.T;
  Matrix X = Matrix::Zero(spec.n(), 2);
  X.col(0) = spec.x0;
  X.col(1) = spec.x0;
  Matrix U(spec.n(), 2), A(spec.d(), 2);
  U.col(0) = spec.u0;
  U.col(1) = spec.u0;
  A.col(0) = spec.a0;
  A.col(1) = spec.a0;
  return ContinuousPath(times, X, U, A);
}

}  // namespace sweep
