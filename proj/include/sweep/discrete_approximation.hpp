#pragma once

#include <sstream>

#include "sweep/sweeping_dynamics.hpp"

namespace sweep {

/// Uniform mesh t_j = j T/k together with the band indices of the norm
/// constraint: j_tau is the smallest j with t_j >= tau, j_tau_upper the
/// largest j with t_j <= T - tau. Between them the norm constraint is an
/// equality; outside it is the widened band.
struct Mesh {
  int k = 1;
  double T = 1.0;
  double h = 1.0;
  int j_tau = 0;
  int j_tau_upper = 0;

  Mesh() = default;
  Mesh(int k_, double T_, double tau) : k(k_), T(T_), h(T_ / k_) {
    require(k >= 1, "Mesh: step count must be >= 1");
    const double tol = 1e-12 * std::max(1.0, T);
    j_tau = 0;
    while (j_tau < k && time(j_tau) < tau - tol) ++j_tau;
    j_tau_upper = k;
    while (j_tau_upper > 0 && time(j_tau_upper) > T - tau + tol) --j_tau_upper;
  }

  double time(int j) const { return h * j; }
  bool equality_band(int j) const { return j >= j_tau && j <= j_tau_upper; }
};

/// Grid triple (x_j, u_j, a_j), j = 0..k. The decision variable of the
/// discrete problem and the output of the feasible-solution constructor.
struct DiscreteTriple {
  Mesh mesh;
  Matrix x;  // n x (k+1)
  Matrix u;  // n x (k+1)
  Matrix a;  // d x (k+1)

  int k() const { return mesh.k; }
  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(a.rows()); }

  Vector dx(int j) const { return (x.col(j + 1) - x.col(j)) / mesh.h; }
  Vector du(int j) const { return (u.col(j + 1) - u.col(j)) / mesh.h; }
  Vector da(int j) const { return (a.col(j + 1) - a.col(j)) / mesh.h; }

  ContinuousPath interpolate() const {
    Vector times(mesh.k + 1);
    for (int j = 0; j <= mesh.k; ++j) times[j] = mesh.time(j);
    return ContinuousPath(times, x, u, a);
  }

  static DiscreteTriple sample(const ContinuousPath& path, const Mesh& mesh) {
    DiscreteTriple z;
    z.mesh = mesh;
    z.x.resize(path.state_dim(), mesh.k + 1);
    z.u.resize(path.shift_dim(), mesh.k + 1);
    z.a.resize(path.control_dim(), mesh.k + 1);
    for (int j = 0; j <= mesh.k; ++j) {
      double t = mesh.time(j);
      z.x.col(j) = path.x(t);
      z.u.col(j) = path.u(t);
      z.a.col(j) = path.a(t);
    }
    return z;
  }
};

/// Error constants of the feasible-solution construction.
struct MuConstants {
  double mu = 0.0;          // max of the three difference-quotient sums
  double mu_tilde = 0.0;    // max{3mu(1+4K)e^K, 4mu(e^K+1)}
  double mu_tilde_alt = 0.0;  // max{3mu+4K mu e^K, 4mu e^K + mu} (looser variant)
  double eps_k = 0.0;       // 2 h mu e^K
  double q_state = 0.0, q_u_first = 0.0, q_u_var = 0.0;
};

/// Computes mu from the reference's difference quotients on the mesh, with a
/// floor of 1e-12, and the derived constants mu_tilde and eps_k.
inline MuConstants mu_constants(const ContinuousPath& reference, const ProblemSpec& spec,
                                const Mesh& mesh) {
  MuConstants c;
  const double h = mesh.h;
  for (int j = 0; j < mesh.k; ++j) {
    double tj = mesh.time(j);
    Vector quot = (reference.x(mesh.time(j + 1)) - reference.x(tj)) / h;
    c.q_state += (quot - reference.x_dot(tj)).norm();
  }
  c.q_u_first = ((reference.u(mesh.time(1)) - reference.u(mesh.time(0))) / h).norm();
  for (int j = 0; j + 2 <= mesh.k; ++j) {
    Vector d1 = (reference.u(mesh.time(j + 1)) - reference.u(mesh.time(j))) / h;
    Vector d2 = (reference.u(mesh.time(j + 2)) - reference.u(mesh.time(j + 1))) / h;
    c.q_u_var += (d2 - d1).norm();
  }
  c.mu = std::max({c.q_state, c.q_u_first, c.q_u_var, 1e-12});
  const double K = spec.f.lipschitz_K;
  const double eK = std::exp(K);
  c.mu_tilde = std::max(3.0 * c.mu * (1.0 + 4.0 * K) * eK, 4.0 * c.mu * (eK + 1.0));
  c.mu_tilde_alt = std::max(3.0 * c.mu + 4.0 * K * c.mu * eK, 4.0 * c.mu * eK + c.mu);
  c.eps_k = 2.0 * h * c.mu * eK;
  return c;
}

namespace detail {

/// Exact integral of ||v - zdot(t)||^2 over [lo, hi] for the piecewise
/// constant derivative of a piecewise linear path; splits at the reference
/// breakpoints so the integrand is constant on each piece.
inline double proximity_cell(const ContinuousPath& ref, char which, const Vector& v, double lo,
                             double hi) {
  double acc = 0.0;
  double t = lo;
  const double tiny = 1e-14 * std::max(1.0, hi);
  while (t < hi - tiny) {
    int c = ref.cell(t + tiny);
    double cell_end = std::min(hi, ref.times()[c + 1]);
    if (cell_end <= t + tiny) cell_end = hi;  // beyond the reference grid
    Vector slope = which == 'x' ? ref.x_dot(t + tiny)
                  : which == 'u' ? ref.u_dot(t + tiny)
                                 : ref.a_dot(t + tiny);
    acc += (v - slope).squaredNorm() * (cell_end - t);
    t = cell_end;
  }
  return acc;
}

inline double dist_to_halfline(double s, double bound) { return std::max(s - bound, 0.0); }

}  // namespace detail

struct ResidualRow {
  std::string family;
  int j = -1;
  int i = -1;
  double value = 0.0;  // signed; <= 0 (or <= tol for equalities) means satisfied
};

struct ResidualTable {
  std::vector<ResidualRow> rows;

  double max_value(const std::string& family = "") const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (family.empty() || r.family == family) m = std::max(m, r.value);
    return rows.empty() ? 0.0 : m;
  }
  void add(const std::string& family, int j, int i, double value) {
    rows.push_back({family, j, i, value});
  }
};

/// Outcome of the feasible-solution construction: the constants, the realized
/// gaps and variation totals, and a per-constraint residual table.
struct FeasibilityReport {
  MuConstants constants;
  double max_state_gap = 0.0;        // max_j ||x^k_j - xbar(t_j)||
  double variation_of_u_dot = 0.0;   // var(du/dt) of the constructed u
  double first_u_quotient = 0.0;     // ||(u_1 - u_0)/h||
  double max_u_norm_drift = 0.0;     // max_j | ||u_j|| - r | on the equality band
  double max_renorm_shift = 0.0;     // radial corrections applied (normally 0)
  double w12_velocity_gap = 0.0;     // int ||z'^k - z'bar||^2
  double initial_velocity_gap = 0.0; // ||(x_1 - x_0)/h - x'bar(0)||
  ResidualTable residuals;
  bool gap_within_bound = false;      // max_state_gap <= eps_k
  bool variation_within_bound = false;
};

/// Checks that a reference satisfies the sweeping system at the mesh points:
/// initial state, mixed constraints, the norm constraint band, and the
/// velocity inclusion via the projection distance. Returns violation rows.
inline ResidualTable reference_mesh_feasibility(const ContinuousPath& reference,
                                                const ProblemSpec& spec, const Mesh& mesh,
                                                double tol) {
  ResidualTable t;
  double init = (reference.x(0.0) - spec.x0).norm();
  if (init > tol) t.add("reference_x0", 0, -1, init);
  for (int j = 0; j <= mesh.k; ++j) {
    double tj = mesh.time(j);
    Vector diff = reference.x(tj) - reference.u(tj);
    Vector vals = spec.C.evaluate(diff);
    bool inside = true;
    for (int i = 0; i < spec.C.count(); ++i)
      if (vals[i] > tol) {
        t.add("reference_mixed", j, i, vals[i]);
        inside = false;
      }
    double un = reference.u(tj).norm();
    if (mesh.equality_band(j)) {
      if (std::abs(un - spec.r) > tol) t.add("reference_u_norm", j, -1, std::abs(un - spec.r));
    } else {
      double lo = spec.r - spec.tau, hi = spec.r + spec.tau;
      double viol = std::max(lo - un, un - hi);
      if (viol > tol) t.add("reference_u_norm", j, -1, viol);
    }
    if (j < mesh.k && inside) {
      VelocityProjection p =
          F_image_project(-reference.x_dot(tj), reference.x(tj), reference.u(tj),
                          reference.a(tj), spec, std::max(tol, kActiveTol));
      if (p.distance > tol) t.add("reference_inclusion", j, -1, p.distance);
    }
  }
  return t;
}

/// Feasible-solution constructor. Walks the mesh selecting at each step the
/// projection of the reference difference quotient onto the velocity set at
/// the current constructed point, keeping x^k - u^k equal to xbar - ubar.
/// Radial renormalization of u^k onto the r-sphere fires only if the drift
/// ever exceeds the eps_k band that the construction itself guarantees; any
/// applied shift is logged in the report.
inline std::pair<DiscreteTriple, FeasibilityReport> approximate_feasible(
    const ContinuousPath& reference, const ProblemSpec& spec, const Mesh& mesh,
    double precondition_tol = 1e-6) {
  ResidualTable pre = reference_mesh_feasibility(reference, spec, mesh, precondition_tol);
  if (!pre.rows.empty()) {
    std::ostringstream msg;
    msg << "approximate_feasible: reference infeasible at mesh points:";
    for (size_t i = 0; i < pre.rows.size() && i < 8; ++i)
      msg << " [" << pre.rows[i].family << " j=" << pre.rows[i].j << " value=" << pre.rows[i].value
          << "]";
    throw SweepError(msg.str());
  }

  FeasibilityReport rep;
  rep.constants = mu_constants(reference, spec, mesh);
  const int k = mesh.k;
  const double h = mesh.h;

  DiscreteTriple z;
  z.mesh = mesh;
  z.x.resize(spec.n(), k + 1);
  z.u.resize(spec.n(), k + 1);
  z.a.resize(spec.d(), k + 1);
  for (int j = 0; j <= k; ++j) z.a.col(j) = reference.a(mesh.time(j));

  z.x.col(0) = spec.x0;
  auto set_shift = [&](int j) {
    double tj = mesh.time(j);
    z.u.col(j) = z.x.col(j) - reference.x(tj) + reference.u(tj);
    if (mesh.equality_band(j)) {
      double un = z.u.col(j).norm();
      rep.max_u_norm_drift = std::max(rep.max_u_norm_drift, std::abs(un - spec.r));
      if (std::abs(un - spec.r) > rep.constants.eps_k + 1e-12 && un > 0.0) {
        Vector corrected = z.u.col(j) * (spec.r / un);
        Vector shift = corrected - z.u.col(j);
        rep.max_renorm_shift = std::max(rep.max_renorm_shift, shift.norm());
        z.u.col(j) = corrected;
        z.x.col(j) += shift;  // preserves x^k - u^k = xbar - ubar
      }
    }
  };

  set_shift(0);
  for (int j = 0; j < k; ++j) {
    double tj = mesh.time(j);
    Vector quot = (reference.x(mesh.time(j + 1)) - reference.x(tj)) / h;
    VelocityProjection p = F_image_project(-quot, z.x.col(j), z.u.col(j), z.a.col(j), spec);
    z.x.col(j + 1) = z.x.col(j) - h * p.point;
    set_shift(j + 1);
  }

  for (int j = 0; j <= k; ++j) {
    double gap = (z.x.col(j) - reference.x(mesh.time(j))).norm();
    rep.max_state_gap = std::max(rep.max_state_gap, gap);
    rep.residuals.add("state_gap", j, -1, gap - rep.constants.eps_k);
  }
  rep.first_u_quotient = z.du(0).norm();
  for (int j = 0; j + 2 <= k; ++j)
    rep.variation_of_u_dot += (z.du(j + 1) - z.du(j)).norm();
  for (int j = 0; j < k; ++j) {
    double tj = mesh.time(j), tj1 = mesh.time(j + 1);
    rep.w12_velocity_gap += detail::proximity_cell(reference, 'x', z.dx(j), tj, tj1) +
                            detail::proximity_cell(reference, 'u', z.du(j), tj, tj1) +
                            detail::proximity_cell(reference, 'a', z.da(j), tj, tj1);
  }
  rep.initial_velocity_gap = (z.dx(0) - reference.x_dot(0.0)).norm();
  rep.gap_within_bound = rep.max_state_gap <= rep.constants.eps_k + 1e-12;
  rep.variation_within_bound = rep.variation_of_u_dot <= rep.constants.mu_tilde + 1e-12 &&
                               rep.first_u_quotient <= rep.constants.mu_tilde + 1e-12;
  rep.residuals.add("u_dot_variation", -1, -1, rep.variation_of_u_dot - rep.constants.mu_tilde);
  rep.residuals.add("u_first_quotient", -1, -1, rep.first_u_quotient - rep.constants.mu_tilde);
  return {z, rep};
}

struct CostBreakdown {
  double terminal = 0.0;
  double running = 0.0;
  double initial_velocity = 0.0;
  double proximity = 0.0;
  double u_quotient_penalty = 0.0;
  double u_variation_penalty = 0.0;
  double total() const {
    return terminal + running + initial_velocity + proximity + u_quotient_penalty +
           u_variation_penalty;
  }
};

/// Exact evaluation of the discrete cost: terminal + h * sum of running costs
/// + initial-velocity penalty + W^{1,2} proximity integrals + the two squared
/// distances of the u-variation statistics to (-inf, mu_tilde].
inline CostBreakdown cost_Jk_breakdown(const DiscreteTriple& z, const ContinuousPath& reference,
                                       const ProblemSpec& spec, double mu_tilde) {
  CostBreakdown out;
  const int k = z.k();
  const double h = z.mesh.h;
  out.terminal = spec.terminal.value(z.x.col(k));
  for (int j = 0; j < k; ++j) {
    double tj = z.mesh.time(j);
    out.running += h * spec.running.value(tj, z.x.col(j), z.u.col(j), z.a.col(j), z.dx(j),
                                          z.du(j), z.da(j));
    out.proximity += detail::proximity_cell(reference, 'x', z.dx(j), tj, z.mesh.time(j + 1));
    out.proximity += detail::proximity_cell(reference, 'u', z.du(j), tj, z.mesh.time(j + 1));
    out.proximity += detail::proximity_cell(reference, 'a', z.da(j), tj, z.mesh.time(j + 1));
  }
  out.initial_velocity = (z.dx(0) - reference.x_dot(0.0)).squaredNorm();
  out.u_quotient_penalty =
      std::pow(detail::dist_to_halfline(z.du(0).norm(), mu_tilde), 2);
  double var = 0.0;
  for (int j = 0; j + 2 <= k; ++j) var += (z.du(j + 1) - z.du(j)).norm();
  out.u_variation_penalty = std::pow(detail::dist_to_halfline(var, mu_tilde), 2);
  return out;
}

inline double cost_Jk(const DiscreteTriple& z, const ContinuousPath& reference,
                      const ProblemSpec& spec, double mu_tilde) {
  return cost_Jk_breakdown(z, reference, spec, mu_tilde).total();
}

/// Gradient of cost_Jk with respect to every node (columns j = 0..k for each
/// block); callers mask the pinned columns. Quadratic catalog only.
struct CostGradient {
  Matrix gx, gu, ga;
};

inline CostGradient gradient_Jk(const DiscreteTriple& z, const ContinuousPath& reference,
                                const ProblemSpec& spec, double mu_tilde) {
  require(spec.running.quadratic, "gradient_Jk: analytic gradient needs the quadratic catalog");
  const int k = z.k();
  const double h = z.mesh.h;
  CostGradient g;
  g.gx = Matrix::Zero(z.n(), k + 1);
  g.gu = Matrix::Zero(z.n(), k + 1);
  g.ga = Matrix::Zero(z.d(), k + 1);

  g.gx.col(k) += spec.terminal.gradient(z.x.col(k));

  for (int j = 0; j < k; ++j) {
    g.gx.col(j) += h * spec.running.grad_x(z.x.col(j));
    g.gu.col(j) += h * spec.running.grad_u(z.u.col(j));
    g.ga.col(j) += h * spec.running.grad_a(z.a.col(j));
    Vector vx = spec.running.grad_xd(z.dx(j));
    Vector vu = spec.running.grad_ud(z.du(j));
    Vector va = spec.running.grad_ad(z.da(j));
    g.gx.col(j + 1) += vx;
    g.gx.col(j) -= vx;
    g.gu.col(j + 1) += vu;
    g.gu.col(j) -= vu;
    g.ga.col(j + 1) += va;
    g.ga.col(j) -= va;

    // Proximity term: d/dv of the cell integral is theta_j = 2(h v - delta zbar).
    double tj = z.mesh.time(j), tj1 = z.mesh.time(j + 1);
    Vector thx = 2.0 * (h * z.dx(j) - (reference.x(tj1) - reference.x(tj)));
    Vector thu = 2.0 * (h * z.du(j) - (reference.u(tj1) - reference.u(tj)));
    Vector tha = 2.0 * (h * z.da(j) - (reference.a(tj1) - reference.a(tj)));
    g.gx.col(j + 1) += thx / h;
    g.gx.col(j) -= thx / h;
    g.gu.col(j + 1) += thu / h;
    g.gu.col(j) -= thu / h;
    g.ga.col(j + 1) += tha / h;
    g.ga.col(j) -= tha / h;
  }

  Vector D = z.dx(0) - reference.x_dot(0.0);
  g.gx.col(1) += 2.0 * D / h;
  g.gx.col(0) -= 2.0 * D / h;

  double s1 = z.du(0).norm();
  if (s1 > mu_tilde && s1 > 0.0) {
    Vector dir = z.du(0) / s1;
    g.gu.col(1) += 2.0 * (s1 - mu_tilde) * dir / h;
    g.gu.col(0) -= 2.0 * (s1 - mu_tilde) * dir / h;
  }
  double var = 0.0;
  for (int j = 0; j + 2 <= k; ++j) var += (z.du(j + 1) - z.du(j)).norm();
  if (var > mu_tilde) {
    double f = 2.0 * (var - mu_tilde);
    for (int j = 0; j + 2 <= k; ++j) {
      Vector d2 = z.du(j + 1) - z.du(j);
      double nn = d2.norm();
      if (nn == 0.0) continue;
      Vector dir = d2 / (nn * h);
      g.gu.col(j + 2) += f * dir;
      g.gu.col(j + 1) -= 2.0 * f * dir;
      g.gu.col(j) += f * dir;
    }
  }
  return g;
}

/// Signed residuals of the discrete constraint system. Negative values mean
/// satisfied with slack; the velocity inclusion and the norm equalities are
/// nonnegative distances.
inline ResidualTable check_discrete_constraints(const DiscreteTriple& z,
                                                const ContinuousPath& reference,
                                                const ProblemSpec& spec, double eps_k,
                                                double mu_tilde, double ilm_epsilon) {
  ResidualTable t;
  const int k = z.k();
  const double h = z.mesh.h;

  t.add("initial_state", 0, -1, (z.x.col(0) - spec.x0).norm());
  t.add("initial_shift", 0, -1, (z.u.col(0) - reference.u(0.0)).norm());
  t.add("initial_control", 0, -1, (z.a.col(0) - reference.a(0.0)).norm());
  for (int j = 0; j <= k; ++j) {
    Vector vals = spec.C.evaluate(z.x.col(j) - z.u.col(j));
    for (int i = 0; i < spec.C.count(); ++i)
      t.add(j == k ? "terminal_mixed" : "mixed", j, i, vals[i]);
  }
  for (int j = 0; j < k; ++j) {
    Vector quot = (z.x.col(j) - z.x.col(j + 1)) / h;
    double dist;
    ActiveIndices act = active_indices(z.x.col(j) - z.u.col(j), spec.C);
    if (act.outside) {
      dist = std::numeric_limits<double>::infinity();
    } else {
      dist = F_image_project(quot, z.x.col(j), z.u.col(j), z.a.col(j), spec).distance;
    }
    t.add("velocity_inclusion", j, -1, dist);
  }
  for (int j = 0; j <= k; ++j) {
    double un = z.u.col(j).norm();
    if (z.mesh.equality_band(j)) {
      t.add("u_norm_equality", j, -1, std::abs(un - spec.r));
    } else {
      double lo = spec.r - spec.tau - eps_k, hi = spec.r + spec.tau + eps_k;
      t.add("u_norm_band", j, -1, std::max(lo - un, un - hi));
    }
  }
  for (int j = 0; j < k; ++j) {
    double tj = z.mesh.time(j);
    Vector dz(z.n() * 2 + z.d());
    dz << z.x.col(j) - reference.x(tj), z.u.col(j) - reference.u(tj),
        z.a.col(j) - reference.a(tj);
    t.add("uniform_proximity", j, -1, dz.norm() - ilm_epsilon / 2.0);
  }
  double w12 = 0.0;
  for (int j = 0; j < k; ++j) {
    double tj = z.mesh.time(j), tj1 = z.mesh.time(j + 1);
    w12 += detail::proximity_cell(reference, 'x', z.dx(j), tj, tj1);
    w12 += detail::proximity_cell(reference, 'u', z.du(j), tj, tj1);
    w12 += detail::proximity_cell(reference, 'a', z.da(j), tj, tj1);
  }
  t.add("w12_proximity", -1, -1, w12 - ilm_epsilon / 2.0);
  t.add("u_first_quotient", -1, -1, z.du(0).norm() - (mu_tilde + 1.0));
  double var = 0.0;
  for (int j = 0; j + 2 <= k; ++j) var += (z.du(j + 1) - z.du(j)).norm();
  t.add("u_dot_variation", -1, -1, var - (mu_tilde + 1.0));
  return t;
}

}  // namespace sweep
