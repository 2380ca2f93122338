#pragma once

#include <limits>

#include "sweep/types.hpp"

namespace sweep {

/// Solution of a sign-constrained least-squares problem
///   min ||A x - b||  subject to x_i >= 0 for constrained indices.
struct NnlsResult {
  Vector x;
  double residual = 0.0;  // ||A x - b||
  int iterations = 0;
  bool converged = true;
};

/// Lawson–Hanson active-set solver, generalized so that selected variables may
/// be unconstrained (free). Free variables live permanently in the passive set.
/// The passive least-squares subproblems are solved by complete orthogonal
/// decomposition, which picks the minimum-norm solution under rank deficiency
/// and keeps the multiplier recovery deterministic.
inline NnlsResult nnls_mixed(const Matrix& A, const Vector& b,
                             const std::vector<bool>& nonneg,
                             double tol = 1e-12, int max_iter = -1) {
  const int n = static_cast<int>(A.cols());
  require(static_cast<int>(nonneg.size()) == n, "nnls_mixed: bound mask size mismatch");
  if (max_iter < 0) max_iter = 6 * (n + 1);

  NnlsResult out;
  out.x = Vector::Zero(n);
  std::vector<bool> passive(n, false);
  int n_passive = 0;
  for (int i = 0; i < n; ++i)
    if (!nonneg[i]) {
      passive[i] = true;
      ++n_passive;
    }

  const double scale = std::max(1.0, b.norm()) * std::max(1.0, A.norm());
  const double dual_tol = tol * scale;

  auto solve_passive = [&](Vector& z) {
    // Least squares restricted to passive columns; zeros elsewhere.
    z = Vector::Zero(n);
    if (n_passive == 0) return;
    Matrix Ap(A.rows(), n_passive);
    std::vector<int> cols;
    cols.reserve(n_passive);
    for (int i = 0; i < n; ++i)
      if (passive[i]) {
        Ap.col(static_cast<int>(cols.size())) = A.col(i);
        cols.push_back(i);
      }
    Vector zp = Ap.completeOrthogonalDecomposition().solve(b);
    for (size_t j = 0; j < cols.size(); ++j) z[cols[j]] = zp[static_cast<int>(j)];
  };

  if (n_passive > 0) {
    Vector z;
    solve_passive(z);
    out.x = z;  // free variables start at their unconstrained optimum
    // A free-only start may already violate nothing; constrained ones are at 0.
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (nonneg[i] && out.x[i] != 0.0) ok = false;
    if (!ok) out.x = Vector::Zero(n);
  }

  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    Vector w = A.transpose() * (b - A * out.x);
    int best = -1;
    double best_w = dual_tol;
    for (int i = 0; i < n; ++i)
      if (nonneg[i] && !passive[i] && w[i] > best_w) {
        best_w = w[i];
        best = i;
      }
    if (best < 0) break;  // KKT satisfied
    passive[best] = true;
    ++n_passive;

    Vector z;
    solve_passive(z);
    // Inner loop: retreat while the passive trial violates nonnegativity.
    int guard = 0;
    while (guard++ <= n + 1) {
      double alpha = 1.0;
      int blocker = -1;
      for (int i = 0; i < n; ++i) {
        if (!passive[i] || !nonneg[i]) continue;
        if (z[i] <= 0.0) {
          double step = out.x[i] / (out.x[i] - z[i]);
          if (step < alpha) {
            alpha = step;
            blocker = i;
          }
        }
      }
      if (blocker < 0) break;
      out.x += alpha * (z - out.x);
      for (int i = 0; i < n; ++i)
        if (passive[i] && nonneg[i] && (i == blocker || out.x[i] <= tol)) {
          passive[i] = false;
          out.x[i] = 0.0;
          --n_passive;
        }
      solve_passive(z);
    }
    out.x = z;
    for (int i = 0; i < n; ++i)
      if (nonneg[i] && out.x[i] < 0.0) out.x[i] = 0.0;
  }

  out.residual = (A * out.x - b).norm();
  out.converged = true;
  return out;
}

/// All-nonnegative convenience overload.
inline NnlsResult nnls(const Matrix& A, const Vector& b, double tol = 1e-12) {
  return nnls_mixed(A, b, std::vector<bool>(A.cols(), true), tol);
}

}  // namespace sweep
