#pragma once

#include <functional>
#include <map>

#include "sweep/discrete_approximation.hpp"
#include "sweep/generalized_calculus.hpp"

namespace sweep {

/// Dual data of the discrete necessary-optimality system: cost multiplier,
/// terminal-cone and per-step cone multipliers, norm-constraint multipliers,
/// the three adjoint sequences, subgradient selections of the running cost,
/// the proximity-term vectors theta and the initial-velocity gradient chi.
struct DualCertificate {
  double lambda = 1.0;
  Matrix eta;             // m x (k+1); column k is the terminal multiplier
  Vector xi;              // k+1
  Matrix p_x, p_u;        // n x (k+1)
  Matrix p_a;             // d x (k+1)
  Matrix gamma;           // m x k
  Matrix w_x, w_u, w_a;   // position-slot subgradients, one column per step
  Matrix v_x, v_u, v_a;   // velocity-slot subgradients
  Matrix theta_x, theta_u, theta_a;  // n|n|d x k
  Matrix chi;             // n x (k+1); lambda-scaled, h-normalized

  bool rank_deficient = false;
  double recovery_residual = 0.0;

  int k() const { return static_cast<int>(p_x.cols()) - 1; }

  double nontriviality_margin() const {
    double s = lambda + eta.col(k()).norm() + xi.norm() + p_u.col(0).norm() + p_a.col(0).norm();
    for (int j = 0; j < k(); ++j) s += p_x.col(j).norm();
    return s;
  }
  double nontriviality_strict_margin() const {
    return lambda + xi.norm() + p_u.col(0).norm() + p_a.col(0).norm();
  }
};

/// Subgradient selections, proximity vectors and the initial-velocity
/// gradient recomputed from the primal triple and the reference.
struct ReferenceTerms {
  Matrix w_x, w_u, w_a, v_x, v_u, v_a;
  Matrix theta_x, theta_u, theta_a;
  Matrix chi;  // n x (k+1)
};

inline ReferenceTerms reference_terms(const DiscreteTriple& z, const ContinuousPath& reference,
                                      const ProblemSpec& spec, double lambda) {
  const int k = z.k();
  const double h = z.mesh.h;
  ReferenceTerms t;
  t.w_x.resize(z.n(), k);
  t.w_u.resize(z.n(), k);
  t.w_a.resize(z.d(), k);
  t.v_x.resize(z.n(), k);
  t.v_u.resize(z.n(), k);
  t.v_a.resize(z.d(), k);
  t.theta_x.resize(z.n(), k);
  t.theta_u.resize(z.n(), k);
  t.theta_a.resize(z.d(), k);
  require(spec.running.quadratic, "reference_terms: quadratic running-cost catalog required");
  for (int j = 0; j < k; ++j) {
    t.w_x.col(j) = spec.running.grad_x(z.x.col(j));
    t.w_u.col(j) = spec.running.grad_u(z.u.col(j));
    t.w_a.col(j) = spec.running.grad_a(z.a.col(j));
    t.v_x.col(j) = spec.running.grad_xd(z.dx(j));
    t.v_u.col(j) = spec.running.grad_ud(z.du(j));
    t.v_a.col(j) = spec.running.grad_ad(z.da(j));
    double tj = z.mesh.time(j), tj1 = z.mesh.time(j + 1);
    t.theta_x.col(j) = 2.0 * (h * z.dx(j) - (reference.x(tj1) - reference.x(tj)));
    t.theta_u.col(j) = 2.0 * (h * z.du(j) - (reference.u(tj1) - reference.u(tj)));
    t.theta_a.col(j) = 2.0 * (h * z.da(j) - (reference.a(tj1) - reference.a(tj)));
  }
  t.chi = Matrix::Zero(z.n(), k + 1);
  Vector D = z.dx(0) - reference.x_dot(0.0);
  t.chi.col(0) = -(2.0 * lambda / (h * h)) * D;
  t.chi.col(1) = (2.0 * lambda / (h * h)) * D;
  return t;
}

/// Per-equation residual report. Keys are stable family names; a report
/// passes when every keyed residual is within tolerance and the
/// nontriviality margin is positive.
struct ResidualReport {
  std::map<std::string, double> residuals;
  double nontriviality = 0.0;
  double nontriviality_strict = 0.0;
  bool generators_independent = false;
  double tol = 1e-8;
  bool pass = false;

  void bump(const std::string& key, double value) {
    auto it = residuals.find(key);
    if (it == residuals.end())
      residuals[key] = value;
    else
      it->second = std::max(it->second, value);
  }
  double max_residual() const {
    double m = 0.0;
    for (const auto& [k, v] : residuals) m = std::max(m, v);
    return m;
  }
  void finalize() { pass = max_residual() <= tol && nontriviality > tol; }
};

namespace detail {

inline Vector eta_combination(const ProblemSpec& spec, const Matrix& eta, int col) {
  Vector s = Vector::Zero(spec.n());
  for (int i = 0; i < spec.C.count(); ++i) s += eta(i, col) * spec.C.generator(i);
  return s;
}

inline Vector gamma_combination(const ProblemSpec& spec, const Matrix& gamma, int col) {
  Vector s = Vector::Zero(spec.n());
  for (int i = 0; i < spec.C.count(); ++i) s += gamma(i, col) * spec.C.generator(i);
  return s;
}

/// Direction at which the cone multiplier pattern of step j is evaluated.
inline Vector y_direction(const DualCertificate& c, int j, double h) {
  return c.p_x.col(j + 1) - c.lambda * (c.theta_x.col(j) / h + c.v_x.col(j));
}

/// Shared algebraic conditions: norm-constraint multiplier signs, the two
/// adjoint links, the transversality block and the terminal complementarity.
inline void shared_conditions(const DiscreteTriple& z, const DualCertificate& c,
                              const ProblemSpec& spec, double eps_k, ResidualReport& rep) {
  const int k = z.k();
  const double h = z.mesh.h;
  const double tol = rep.tol;

  for (int j = 0; j <= k; ++j) {
    double un = z.u.col(j).norm();
    if (!z.mesh.equality_band(j)) {
      // Sign pattern on the widened band: zero inside, signed at the ends.
      double lo = spec.r - spec.tau - eps_k, hi = spec.r + spec.tau + eps_k;
      double viol = 0.0;
      if (un > lo + tol && un < hi - tol)
        viol = std::abs(c.xi[j]);
      else if (un <= lo + tol)
        viol = std::max(c.xi[j], 0.0);
      else
        viol = std::max(-c.xi[j], 0.0);
      rep.bump("xi_sign", viol);
    }
  }
  for (int j = 0; j < k; ++j) {
    rep.bump("adjoint_link_u",
             (c.p_u.col(j + 1) - c.lambda * (c.v_u.col(j) + c.theta_u.col(j) / h)).norm());
    rep.bump("adjoint_link_a",
             (c.p_a.col(j + 1) - c.lambda * (c.v_a.col(j) + c.theta_a.col(j) / h)).norm());
  }

  Vector tx = c.p_x.col(k) + c.lambda * spec.terminal.gradient(z.x.col(k)) +
              h * c.chi.col(k) + eta_combination(spec, c.eta, k);
  rep.bump("transversality_x", tx.norm());
  Vector tu = c.p_u.col(k) - eta_combination(spec, c.eta, k) + 2.0 * c.xi[k] * z.u.col(k);
  rep.bump("transversality_u", tu.norm());
  rep.bump("transversality_a", c.p_a.col(k).norm());

  Vector terminal_vals = spec.C.evaluate(z.x.col(k) - z.u.col(k));
  for (int i = 0; i < spec.C.count(); ++i) {
    rep.bump("complementarity", std::abs(c.eta(i, k) * terminal_vals[i]));
    rep.bump("eta_sign", std::max(-c.eta(i, k), 0.0));
  }

  rep.nontriviality = c.nontriviality_margin();
  rep.nontriviality_strict = c.nontriviality_strict_margin();
}

inline void consistency_conditions(const DiscreteTriple& z, const DualCertificate& c,
                                   const ContinuousPath& reference, const ProblemSpec& spec,
                                   ResidualReport& rep) {
  ReferenceTerms t = reference_terms(z, reference, spec, c.lambda);
  double dtheta = (c.theta_x - t.theta_x).norm() + (c.theta_u - t.theta_u).norm() +
                  (c.theta_a - t.theta_a).norm();
  rep.bump("theta_consistency", dtheta);
  rep.bump("chi_consistency", (c.chi - t.chi).norm());
}

}  // namespace detail

/// Data-explicit optimality conditions: primal cone representation, the three
/// adjoint difference equations with the cone-multiplier pattern evaluated at
/// the certificate's own direction, adjoint links, transversality and the
/// support/sign implications. Requires smooth f.
inline ResidualReport residual_explicit(const DiscreteTriple& z, const DualCertificate& cert,
                                        const ContinuousPath& reference, const ProblemSpec& spec,
                                        double tol = 1e-8) {
  require(spec.f.smooth(),
          "residual_explicit: perturbation is nonsmooth; use residual_EL instead");
  require(cert.k() == z.k(), "residual_explicit: certificate/mesh dimension mismatch");
  const int k = z.k();
  const double h = z.mesh.h;
  ResidualReport rep;
  rep.tol = tol;
  rep.generators_independent = true;

  for (int j = 0; j < k; ++j) {
    ActiveIndices act = active_indices(z.x.col(j) - z.u.col(j), spec.C, tol);
    if (!linear_independence_check(gather_columns(spec.C, act.active)))
      rep.generators_independent = false;

    // Primal dynamics with explicit cone multipliers.
    Vector quot = (z.x.col(j) - z.x.col(j + 1)) / h;
    Vector fj = spec.f.eval(z.x.col(j), z.a.col(j));
    rep.bump("primal_dynamics",
             (quot - fj - detail::eta_combination(spec, cert.eta, j)).norm());
    for (int i = 0; i < spec.C.count(); ++i) {
      rep.bump("eta_sign", std::max(-cert.eta(i, j), 0.0));
      if (!contains_index(act.active, i)) rep.bump("eta_support", std::abs(cert.eta(i, j)));
    }

    Vector y = detail::y_direction(cert, j, h);
    ActiveIndexPartition part = split_indices(y, act.active, spec.C, tol);
    Matrix fx = spec.f.grad_x(z.x.col(j), z.a.col(j));
    Matrix fa = spec.f.grad_a(z.x.col(j), z.a.col(j));

    Vector ax = (cert.p_x.col(j + 1) - cert.p_x.col(j)) / h - cert.lambda * cert.w_x.col(j) -
                cert.chi.col(j) - fx.transpose() * y -
                detail::gamma_combination(spec, cert.gamma, j);
    rep.bump("adjoint_x", ax.norm());
    Vector au = (cert.p_u.col(j + 1) - cert.p_u.col(j)) / h - cert.lambda * cert.w_u.col(j) -
                (2.0 / h) * cert.xi[j] * z.u.col(j) +
                detail::gamma_combination(spec, cert.gamma, j);
    rep.bump("adjoint_u", au.norm());
    Vector aa = (cert.p_a.col(j + 1) - cert.p_a.col(j)) / h - cert.lambda * cert.w_a.col(j) -
                fa.transpose() * y;
    rep.bump("adjoint_a", aa.norm());

    for (int i = 0; i < spec.C.count(); ++i) {
      bool in_zero = contains_index(part.zero_part, i);
      bool in_pos = contains_index(part.pos_part, i);
      if (in_pos)
        rep.bump("gamma_pattern", std::max(-cert.gamma(i, j), 0.0));
      else if (!in_zero)
        rep.bump("gamma_pattern", std::abs(cert.gamma(i, j)));
      if (!contains_index(act.active, i)) rep.bump("gamma_support", std::abs(cert.gamma(i, j)));
      // Active-direction implication under independence.
      if (rep.generators_independent && cert.eta(i, j) > tol)
        rep.bump("eta_active_direction", std::abs(spec.C.generator(i).dot(y)));
    }
  }

  detail::shared_conditions(z, cert, spec, mu_constants(reference, spec, z.mesh).eps_k, rep);
  detail::consistency_conditions(z, cert, reference, spec, rep);
  rep.finalize();
  if (rep.generators_independent && rep.max_residual() <= tol)
    rep.pass = rep.pass && cert.nontriviality_strict_margin() > tol;
  return rep;
}

/// Extended Euler-Lagrange form: the algebraic blocks shared with the
/// explicit conditions plus the graph-normal inclusion, certified through
/// the structured coderivative family.
inline ResidualReport residual_EL(const DiscreteTriple& z, const DualCertificate& cert,
                                  const ContinuousPath& reference, const ProblemSpec& spec,
                                  double tol = 1e-8) {
  require(cert.k() == z.k(), "residual_EL: certificate/mesh dimension mismatch");
  const int k = z.k();
  const double h = z.mesh.h;
  ResidualReport rep;
  rep.tol = tol;
  rep.generators_independent = true;

  for (int j = 0; j < k; ++j) {
    ActiveIndices act = active_indices(z.x.col(j) - z.u.col(j), spec.C, tol);
    if (!linear_independence_check(gather_columns(spec.C, act.active)))
      rep.generators_independent = false;
    Vector quot = (z.x.col(j) - z.x.col(j + 1)) / h;
    VelocityProjection vp = F_image_project(quot, z.x.col(j), z.u.col(j), z.a.col(j), spec);
    rep.bump("graph_point", vp.distance);

    Vector y = detail::y_direction(cert, j, h);
    Vector Tx = (cert.p_x.col(j + 1) - cert.p_x.col(j)) / h - cert.lambda * cert.w_x.col(j) -
                cert.chi.col(j);
    Vector Tu = (cert.p_u.col(j + 1) - cert.p_u.col(j)) / h - cert.lambda * cert.w_u.col(j) -
                (2.0 / h) * cert.xi[j] * z.u.col(j);
    Vector Ta = (cert.p_a.col(j + 1) - cert.p_a.col(j)) / h - cert.lambda * cert.w_a.col(j);
    CoderivativeFamily family(z.x.col(j), z.u.col(j), z.a.col(j), vp.point, spec, y, tol);
    auto mem = family.contains(Tx, Tu, Ta);
    rep.bump("graph_inclusion", mem.residual);
  }

  detail::shared_conditions(z, cert, spec, mu_constants(reference, spec, z.mesh).eps_k, rep);
  detail::consistency_conditions(z, cert, reference, spec, rep);
  rep.finalize();
  return rep;
}

/// Least-squares recovery of a certificate at fixed lambda from the primal
/// triple, the reference and the problem data. The linear system stacks the
/// primal cone representation, the three adjoint equations, the links and
/// the transversality block; eta and the positive part of gamma are sign
/// constrained, and the cone-multiplier pattern is refined by re-evaluating
/// the certificate direction after each pass.
inline DualCertificate recover_multipliers(const DiscreteTriple& z,
                                           const ContinuousPath& reference,
                                           const ProblemSpec& spec, double lambda_fix = 1.0,
                                           int pattern_passes = 3) {
  require(spec.f.kind == PerturbationField::Kind::affine,
          "recover_multipliers: affine perturbation required");
  require(spec.running.quadratic && spec.terminal.quadratic,
          "recover_multipliers: quadratic costs required");
  const int k = z.k();
  const int n = z.n();
  const int d = z.d();
  const int m = spec.C.count();
  const double h = z.mesh.h;

  ReferenceTerms t = reference_terms(z, reference, spec, lambda_fix);

  // Unknown layout: p_x (k+1)n | p_u (k+1)n | p_a (k+1)d | xi (k+1) |
  // eta (k+1)m | gamma km.
  const int off_px = 0;
  const int off_pu = off_px + (k + 1) * n;
  const int off_pa = off_pu + (k + 1) * n;
  const int off_xi = off_pa + (k + 1) * d;
  const int off_eta = off_xi + (k + 1);
  const int off_gamma = off_eta + (k + 1) * m;
  const int nvars = off_gamma + k * m;

  std::vector<IndexSet> active(k + 1);
  for (int j = 0; j <= k; ++j)
    active[j] = active_indices(z.x.col(j) - z.u.col(j), spec.C).active;

  DualCertificate cert;
  cert.lambda = lambda_fix;
  cert.w_x = t.w_x;
  cert.w_u = t.w_u;
  cert.w_a = t.w_a;
  cert.v_x = t.v_x;
  cert.v_u = t.v_u;
  cert.v_a = t.v_a;
  cert.theta_x = t.theta_x;
  cert.theta_u = t.theta_u;
  cert.theta_a = t.theta_a;
  cert.chi = t.chi;
  cert.p_x = Matrix::Zero(n, k + 1);
  cert.p_u = Matrix::Zero(n, k + 1);
  cert.p_a = Matrix::Zero(d, k + 1);
  cert.xi = Vector::Zero(k + 1);
  cert.eta = Matrix::Zero(m, k + 1);
  cert.gamma = Matrix::Zero(m, k);

  // Pattern state: which gamma entries are admissible and which must be >= 0.
  std::vector<std::vector<int>> gamma_kind(k, std::vector<int>(m, 0));  // 0 zero, 1 free, 2 nonneg
  for (int j = 0; j < k; ++j)
    for (int i : active[j]) gamma_kind[j][i] = 1;  // first pass: free on the active set

  struct Entry {
    int row, col;
    double value;
  };
  for (int pass = 0; pass < pattern_passes; ++pass) {
    std::vector<Entry> trips;
    std::vector<double> rhs;
    auto add = [&](int row, int col, double v) { trips.push_back({row, col, v}); };
    int row = 0;
    auto new_rows = [&](int count) {
      int r = row;
      row += count;
      rhs.resize(row, 0.0);
      return r;
    };

    Matrix A = spec.f.A, B = spec.f.B;
    for (int j = 0; j < k; ++j) {
      // Primal: sum_i eta_ji g_i = quot_j - f_j (support on active set).
      Vector prim = (z.x.col(j) - z.x.col(j + 1)) / h - spec.f.eval(z.x.col(j), z.a.col(j));
      int r = new_rows(n);
      for (int c = 0; c < n; ++c) rhs[r + c] = prim[c];
      for (int i : active[j])
        for (int c = 0; c < n; ++c) add(r + c, off_eta + j * m + i, spec.C.generator(i)[c]);

      // Adjoint x: (px_{j+1}-px_j)/h - A^T px_{j+1} - sum gamma g = rhs.
      Vector cst = lambda_fix * t.w_x.col(j) + t.chi.col(j) -
                   A.transpose() * (lambda_fix * (t.theta_x.col(j) / h + t.v_x.col(j)));
      r = new_rows(n);
      for (int c = 0; c < n; ++c) {
        rhs[r + c] = cst[c];
        add(r + c, off_px + (j + 1) * n + c, 1.0 / h);
        add(r + c, off_px + j * n + c, -1.0 / h);
        for (int cc = 0; cc < n; ++cc) add(r + c, off_px + (j + 1) * n + cc, -A(cc, c));
      }
      for (int i = 0; i < m; ++i)
        if (gamma_kind[j][i] != 0)
          for (int c = 0; c < n; ++c) add(r + c, off_gamma + j * m + i, -spec.C.generator(i)[c]);

      // Adjoint u: (pu_{j+1}-pu_j)/h - (2/h) xi_j u_j + sum gamma g = lambda w_u.
      Vector cu = lambda_fix * t.w_u.col(j);
      r = new_rows(n);
      for (int c = 0; c < n; ++c) {
        rhs[r + c] = cu[c];
        add(r + c, off_pu + (j + 1) * n + c, 1.0 / h);
        add(r + c, off_pu + j * n + c, -1.0 / h);
        add(r + c, off_xi + j, -(2.0 / h) * z.u(c, j));
      }
      for (int i = 0; i < m; ++i)
        if (gamma_kind[j][i] != 0)
          for (int c = 0; c < n; ++c) add(r + c, off_gamma + j * m + i, spec.C.generator(i)[c]);

      // Adjoint a: (pa_{j+1}-pa_j)/h - B^T px_{j+1} = lambda w_a - B^T lambda(theta/h + v).
      Vector ca = lambda_fix * t.w_a.col(j) -
                  B.transpose() * (lambda_fix * (t.theta_x.col(j) / h + t.v_x.col(j)));
      r = new_rows(d);
      for (int c = 0; c < d; ++c) {
        rhs[r + c] = ca[c];
        add(r + c, off_pa + (j + 1) * d + c, 1.0 / h);
        add(r + c, off_pa + j * d + c, -1.0 / h);
        for (int cc = 0; cc < n; ++cc) add(r + c, off_px + (j + 1) * n + cc, -B(cc, c));
      }

      // Links.
      Vector lu = lambda_fix * (t.v_u.col(j) + t.theta_u.col(j) / h);
      r = new_rows(n);
      for (int c = 0; c < n; ++c) {
        rhs[r + c] = lu[c];
        add(r + c, off_pu + (j + 1) * n + c, 1.0);
      }
      Vector la = lambda_fix * (t.v_a.col(j) + t.theta_a.col(j) / h);
      r = new_rows(d);
      for (int c = 0; c < d; ++c) {
        rhs[r + c] = la[c];
        add(r + c, off_pa + (j + 1) * d + c, 1.0);
      }
    }

    // Transversality block.
    {
      Vector cx = -lambda_fix * spec.terminal.gradient(z.x.col(k)) - h * t.chi.col(k);
      int r = new_rows(n);
      for (int c = 0; c < n; ++c) {
        rhs[r + c] = cx[c];
        add(r + c, off_px + k * n + c, 1.0);
      }
      for (int i : active[k])
        for (int c = 0; c < n; ++c) add(r + c, off_eta + k * m + i, spec.C.generator(i)[c]);

      r = new_rows(n);
      for (int c = 0; c < n; ++c) {
        add(r + c, off_pu + k * n + c, 1.0);
        add(r + c, off_xi + k, 2.0 * z.u(c, k));
      }
      for (int i : active[k])
        for (int c = 0; c < n; ++c) add(r + c, off_eta + k * m + i, -spec.C.generator(i)[c]);

      r = new_rows(d);
      for (int c = 0; c < d; ++c) add(r + c, off_pa + k * d + c, 1.0);
    }

    // Pins: xi_0 (redundant with the fixed initial control), off-support
    // multipliers, and xi on the interior of the band.
    {
      int r = new_rows(1);
      add(r, off_xi + 0, 1.0);
      for (int j = 0; j <= k; ++j) {
        if (!z.mesh.equality_band(j)) {
          double un = z.u.col(j).norm();
          if (un > spec.r - spec.tau + kActiveTol && un < spec.r + spec.tau - kActiveTol) {
            int rr = new_rows(1);
            add(rr, off_xi + j, 1.0);
          }
        }
        for (int i = 0; i < m; ++i)
          if (!contains_index(active[j], i)) {
            int rr = new_rows(1);
            add(rr, off_eta + j * m + i, 1.0);
          }
      }
      for (int j = 0; j < k; ++j)
        for (int i = 0; i < m; ++i)
          if (gamma_kind[j][i] == 0) {
            int rr = new_rows(1);
            add(rr, off_gamma + j * m + i, 1.0);
          }
    }

    Matrix M = Matrix::Zero(row, nvars);
    for (const auto& tr : trips) M(tr.row, tr.col) += tr.value;
    Vector b = Eigen::Map<const Vector>(rhs.data(), row);

    std::vector<bool> nonneg(nvars, false);
    for (int j = 0; j <= k; ++j)
      for (int i = 0; i < m; ++i) nonneg[off_eta + j * m + i] = true;
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < m; ++i) nonneg[off_gamma + j * m + i] = (gamma_kind[j][i] == 2);

    NnlsResult sol = nnls_mixed(M, b, nonneg);
    cert.recovery_residual = sol.residual;

    for (int j = 0; j <= k; ++j) {
      for (int c = 0; c < n; ++c) {
        cert.p_x(c, j) = sol.x[off_px + j * n + c];
        cert.p_u(c, j) = sol.x[off_pu + j * n + c];
      }
      for (int c = 0; c < d; ++c) cert.p_a(c, j) = sol.x[off_pa + j * d + c];
      cert.xi[j] = sol.x[off_xi + j];
      for (int i = 0; i < m; ++i) cert.eta(i, j) = sol.x[off_eta + j * m + i];
    }
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < m; ++i) cert.gamma(i, j) = sol.x[off_gamma + j * m + i];

    // Refine the gamma pattern at the recovered direction.
    bool changed = false;
    for (int j = 0; j < k; ++j) {
      Vector y = detail::y_direction(cert, j, h);
      ActiveIndexPartition part = split_indices(y, active[j], spec.C);
      for (int i = 0; i < m; ++i) {
        int kind = 0;
        if (contains_index(part.zero_part, i))
          kind = 1;
        else if (contains_index(part.pos_part, i))
          kind = 2;
        if (kind != gamma_kind[j][i]) {
          gamma_kind[j][i] = kind;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }

  for (int j = 0; j <= k; ++j)
    if (!linear_independence_check(gather_columns(spec.C, active[j]))) cert.rank_deficient = true;
  return cert;
}

/// Output of the worked one-dimensional instance: the stationary triple, its
/// certificate, and the reference the certificate is tied to.
struct Example81Result {
  DiscreteTriple z;
  DualCertificate cert;
  ContinuousPath reference;
  Vector S;  // partial sums of the a-controls, S_j = a_0 + ... + a_j
};

enum class Example81Mode { fixed_point, given_reference };

namespace detail {

inline void require_worked_instance(const ProblemSpec& spec) {
  bool ok = spec.n() == 1 && spec.d() == 1 && spec.C.count() == 1 &&
            std::abs(spec.C.generator(0)[0] - 1.0) < 1e-12 && std::abs(spec.r - 1.0) < 1e-12 &&
            std::abs(spec.T - 1.0) < 1e-12 && spec.tau == 0.0 && spec.x0.norm() < 1e-12 &&
            std::abs(spec.u0[0] - 1.0) < 1e-12 &&
            spec.f.kind == PerturbationField::Kind::affine && spec.f.A.norm() < 1e-12 &&
            std::abs(spec.f.B(0, 0) - 1.0) < 1e-12 && spec.f.c.norm() < 1e-12 &&
            spec.terminal.quadratic && std::abs(spec.terminal.Q(0, 0) - 1.0) < 1e-12 &&
            std::abs(spec.terminal.x_target[0] - 1.0) < 1e-12 && spec.running.quadratic &&
            std::abs(spec.running.Qa(0, 0) - 1.0) < 1e-12 && spec.running.Qx.norm() < 1e-12 &&
            spec.running.Qu.norm() < 1e-12 && spec.running.Rx.norm() < 1e-12 &&
            spec.running.Ru.norm() < 1e-12 && spec.running.Ra.norm() < 1e-12;
  require(ok, "example81_solve: problem data does not match the worked 1-D instance");
}

}  // namespace detail

/// Closed-form stationary solve of the worked instance. The optimality
/// system reduces to a linear system in the partial sums S_j of the
/// a-controls with a rank-one coupling through S_{k-1}:
///   fixed_point:      S_j - S_{j-1} + h S_{k-1} = -1,             j = 0..k-1,
///   given_reference:  S_0 pinned to the reference initial control and
///     a_{j+1} - (2 + 3h^2/2) a_j + a_{j-1} - (h^3/2) S_{k-1}
///        = beta_{j+1} - beta_j + h alpha_{j+1} + h^2/2,           j = 1..k-1,
///     with a_k - a_{k-1} = beta_k eliminating the trailing control.
/// The certificate is assembled from the same relations with lambda = 1.
inline Example81Result example81_solve(const ProblemSpec& spec, int k, Example81Mode mode,
                                       const Vector& alpha = Vector(),
                                       const Vector& beta = Vector()) {
  detail::require_worked_instance(spec);
  require(k >= 1, "example81_solve: k must be >= 1");
  const double h = 1.0 / k;
  Mesh mesh(k, spec.T, spec.tau);

  Vector S(k);
  if (mode == Example81Mode::fixed_point) {
    Matrix M = Matrix::Zero(k, k);
    Vector b = Vector::Constant(k, -1.0);
    for (int j = 0; j < k; ++j) {
      M(j, j) += 1.0;
      if (j > 0) M(j, j - 1) -= 1.0;
      M(j, k - 1) += h;
    }
    S = M.colPivHouseholderQr().solve(b);
  } else {
    require(alpha.size() == k && beta.size() == k,
            "example81_solve: alpha/beta sequences must have length k");
    Matrix M = Matrix::Zero(k, k);
    Vector b = Vector::Zero(k);
    // Row 0 pins S_0 to the reference initial control.
    M(0, 0) = 1.0;
    b[0] = spec.a0[0];
    // a_idx = S_idx - S_{idx-1}; a_k is eliminated via a_k = a_{k-1} + beta_k.
    std::function<void(int, int, double)> add_a = [&](int row, int idx, double coeff) {
      if (idx == k) {
        add_a(row, k - 1, coeff);
        b[row] -= coeff * beta[k - 1];
        return;
      }
      M(row, idx) += coeff;
      if (idx > 0) M(row, idx - 1) -= coeff;
    };
    for (int j = 1; j < k; ++j) {
      add_a(j, j + 1, 1.0);
      add_a(j, j, -(2.0 + 1.5 * h * h));
      add_a(j, j - 1, 1.0);
      M(j, k - 1) -= 0.5 * h * h * h;
      b[j] += beta[j] - beta[j - 1] + h * alpha[j] + 0.5 * h * h;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    require(qr.rank() == k, "example81_solve: singular stationarity system");
    S = qr.solve(b);
  }

  DiscreteTriple z;
  z.mesh = mesh;
  z.x.resize(1, k + 1);
  z.u = Matrix::Ones(1, k + 1);
  z.a.resize(1, k + 1);
  z.a(0, 0) = S[0];
  for (int j = 1; j < k; ++j) z.a(0, j) = S[j] - S[j - 1];
  if (mode == Example81Mode::fixed_point)
    z.a(0, k) = z.a(0, k - 1);
  else
    z.a(0, k) = z.a(0, k - 1) + beta[k - 1];
  z.x(0, 0) = 0.0;
  for (int j = 0; j < k; ++j) z.x(0, j + 1) = z.x(0, j) - h * z.a(0, j);

  // Standing interiority assumption of the worked instance.
  for (int j = 0; j < k; ++j)
    require(z.x(0, j) - z.u(0, j) < -kActiveTol,
            "example81_solve: interiority assumption violated at node " + std::to_string(j));
  require(z.x(0, k) - z.u(0, k) <= kActiveTol,
          "example81_solve: terminal mixed constraint violated");

  ContinuousPath reference = [&] {
    if (mode == Example81Mode::fixed_point) return z.interpolate();
    Vector times(k + 1);
    Matrix X(1, k + 1), U(1, k + 1), A(1, k + 1);
    X(0, 0) = spec.x0[0];
    A(0, 0) = spec.a0[0];
    for (int j = 0; j <= k; ++j) {
      times[j] = mesh.time(j);
      U(0, j) = spec.u0[0];
      if (j > 0) {
        X(0, j) = X(0, j - 1) + alpha[j - 1];
        A(0, j) = A(0, j - 1) + beta[j - 1];
      }
    }
    return ContinuousPath(times, X, U, A);
  }();

  const double lambda = 1.0;
  ReferenceTerms t = reference_terms(z, reference, spec, lambda);
  DualCertificate cert;
  cert.lambda = lambda;
  cert.eta = Matrix::Zero(1, k + 1);
  cert.xi = Vector::Zero(k + 1);
  cert.gamma = Matrix::Zero(1, k);
  cert.w_x = t.w_x;
  cert.w_u = t.w_u;
  cert.w_a = t.w_a;
  cert.v_x = t.v_x;
  cert.v_u = t.v_u;
  cert.v_a = t.v_a;
  cert.theta_x = t.theta_x;
  cert.theta_u = t.theta_u;
  cert.theta_a = t.theta_a;
  cert.chi = t.chi;
  cert.p_u = Matrix::Zero(1, k + 1);
  cert.p_x.resize(1, k + 1);
  cert.p_a.resize(1, k + 1);

  double D = z.dx(0)[0] - reference.x_dot(0.0)[0];
  double p_terminal = lambda * (1.0 - z.x(0, k));
  if (k == 1) {
    cert.p_x(0, 1) = p_terminal - lambda * (2.0 / h) * D;
    cert.p_x(0, 0) = cert.p_x(0, 1) + h * (2.0 * lambda / (h * h)) * D;
  } else {
    for (int j = 2; j <= k; ++j) cert.p_x(0, j) = p_terminal;
    cert.p_x(0, 1) = p_terminal - lambda * (2.0 / h) * D;
    cert.p_x(0, 0) = cert.p_x(0, 1) + h * (2.0 * lambda / (h * h)) * D;
  }
  for (int j = 0; j < k; ++j) cert.p_a(0, j + 1) = lambda * t.theta_a(0, j) / h;
  double ytilde0 = cert.p_x(0, 1) - lambda * (t.theta_x(0, 0) / h + t.v_x(0, 0));
  cert.p_a(0, 0) = cert.p_a(0, 1) - h * (lambda * z.a(0, 0) + ytilde0);

  Example81Result out;
  out.z = std::move(z);
  out.cert = std::move(cert);
  out.reference = std::move(reference);
  out.S = S;
  return out;
}

}  // namespace sweep
