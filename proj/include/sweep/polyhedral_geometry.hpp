#pragma once

#include "sweep/nnls.hpp"
#include "sweep/types.hpp"

namespace sweep {

/// The polyhedron C = { x : <g_i, x> <= 0, i = 1..m }, stored via its
/// generating vectors g_i. C is a closed convex cone containing 0, so the
/// translate C + u is never empty.
class GeneratorSet {
 public:
  GeneratorSet() = default;
  GeneratorSet(Matrix generators_as_columns) : G_(std::move(generators_as_columns)) {
    require(G_.cols() >= 1 && G_.rows() >= 1, "GeneratorSet: need m >= 1, n >= 1");
    for (int i = 0; i < G_.cols(); ++i)
      require(G_.col(i).norm() > 0.0,
              "GeneratorSet: generator " + std::to_string(i + 1) + " is zero");
  }

  static GeneratorSet from_rows(const Matrix& rows) { return GeneratorSet(rows.transpose()); }

  int dim() const { return static_cast<int>(G_.rows()); }
  int count() const { return static_cast<int>(G_.cols()); }
  Vector generator(int i) const { return G_.col(i); }
  const Matrix& columns() const { return G_; }

  /// Signed constraint values <g_i, x>.
  Vector evaluate(const Vector& x) const { return G_.transpose() * x; }

  bool member(const Vector& x, double tol = kActiveTol) const {
    return (evaluate(x).array() <= tol).all();
  }

 private:
  Matrix G_;  // n x m, one generator per column
};

struct ActiveIndexPartition {
  IndexSet active;    // I
  IndexSet zero_part; // I_0
  IndexSet pos_part;  // I_>
};

struct ActiveIndices {
  IndexSet active;
  bool outside = false;  // some <g_i, x> exceeded +tol
};

/// Indices with |<g_i, xbar>| <= tol; flags the point as outside C when any
/// constraint value exceeds +tol.
inline ActiveIndices active_indices(const Vector& xbar, const GeneratorSet& C,
                                    double tol = kActiveTol) {
  ActiveIndices out;
  Vector vals = C.evaluate(xbar);
  for (int i = 0; i < C.count(); ++i) {
    if (std::abs(vals[i]) <= tol) out.active.push_back(i);
    if (vals[i] > tol) out.outside = true;
  }
  return out;
}

/// Splits I at direction y: I_0 = { i in I : |<g_i,y>| <= tol },
/// I_> = { i in I : <g_i,y> > tol }.
inline ActiveIndexPartition split_indices(const Vector& y, const IndexSet& I,
                                          const GeneratorSet& C, double tol = kActiveTol) {
  ActiveIndexPartition p;
  p.active = I;
  for (int i : I) {
    require(i >= 0 && i < C.count(), "split_indices: index out of range");
    double v = C.generator(i).dot(y);
    if (std::abs(v) <= tol)
      p.zero_part.push_back(i);
    else if (v > tol)
      p.pos_part.push_back(i);
  }
  return p;
}

struct ProjectionResult {
  Vector point;
  Vector multipliers;    // lambda >= 0 with y - point = sum lambda_i g_i
  double kkt_residual;   // || (y - point) - G lambda ||
};

/// Euclidean projection onto C + u. C is a cone, so the Moreau decomposition
/// applies: y - u splits into its projections onto C and onto the polar cone
/// cone{g_i}; the polar part is a nonnegative least-squares fit which also
/// yields the KKT multipliers with exact complementarity.
inline ProjectionResult project_translated_polyhedron(const Vector& y, const GeneratorSet& C,
                                                      const Vector& u) {
  require(y.size() == C.dim() && u.size() == C.dim(),
          "project_translated_polyhedron: dimension mismatch");
  Vector v = y - u;
  NnlsResult fit = nnls(C.columns(), v);
  ProjectionResult out;
  out.multipliers = fit.x;
  out.point = u + (v - C.columns() * fit.x);
  out.kkt_residual = ((y - out.point) - C.columns() * fit.x).norm();
  return out;
}

inline double distance_to_translated_polyhedron(const Vector& y, const GeneratorSet& C,
                                                const Vector& u) {
  return (y - project_translated_polyhedron(y, C, u).point).norm();
}

struct NormalConeQuery {
  bool contains = false;
  Vector coefficients;   // lambda on all m generators (zeros off the active set)
  double residual = 0.0; // cone fit residual for v
  std::string reason;
};

/// Tests v in N(x; C + u). Outside the set the normal cone is empty; at a
/// member point the cone is generated by the active g_i and membership is
/// decided by a nonnegative least-squares fit over those generators.
inline NormalConeQuery normal_cone_contains(const Vector& x, const Vector& v,
                                            const GeneratorSet& C, const Vector& u,
                                            double tol = kActiveTol) {
  NormalConeQuery q;
  q.coefficients = Vector::Zero(C.count());
  ActiveIndices act = active_indices(x - u, C, tol);
  if (act.outside) {
    q.reason = "x outside set";
    return q;
  }
  if (act.active.empty()) {
    q.residual = v.norm();
    q.contains = q.residual <= tol;
    if (!q.contains) q.reason = "normal cone is {0} at interior point";
    return q;
  }
  Matrix Ga(C.dim(), static_cast<int>(act.active.size()));
  for (size_t j = 0; j < act.active.size(); ++j) Ga.col(static_cast<int>(j)) = C.generator(act.active[j]);
  NnlsResult fit = nnls(Ga, v);
  q.residual = fit.residual;
  q.contains = fit.residual <= tol;
  if (q.contains)
    for (size_t j = 0; j < act.active.size(); ++j) q.coefficients[act.active[j]] = fit.x[static_cast<int>(j)];
  else
    q.reason = "v not in cone of active generators";
  return q;
}

/// Rank check via column-pivoted QR; gates the equality clauses that require
/// linearly independent active generators.
inline bool linear_independence_check(const Matrix& columns, double tol = kRankTol) {
  if (columns.cols() == 0) return true;  // empty family is independent
  Eigen::ColPivHouseholderQR<Matrix> qr(columns);
  qr.setThreshold(tol);
  return qr.rank() == columns.cols();
}

inline Matrix gather_columns(const GeneratorSet& C, const IndexSet& idx) {
  Matrix out(C.dim(), static_cast<int>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(static_cast<int>(j)) = C.generator(idx[j]);
  return out;
}

}  // namespace sweep
