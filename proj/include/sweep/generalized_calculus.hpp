#pragma once

#include <optional>
#include <random>

#include "sweep/sweeping_dynamics.hpp"

namespace sweep {

/// The structured family bounding the coderivative of the sweeping velocity
/// map at (x, u, a, w), evaluated in a direction y:
///   z* = ( grad_x f* y + sum gamma_i g_i,  -sum gamma_i g_i,  grad_a f* y ),
/// gamma_i free on I_0(y), nonnegative on I_>(y), zero elsewhere, with the
/// index sets split at xbar = x - u.
class CoderivativeFamily {
 public:
  CoderivativeFamily(const Vector& x, const Vector& u, const Vector& a, const Vector& w,
                     const ProblemSpec& spec, const Vector& y, double tol = kActiveTol)
      : spec_(spec), y_(y), tol_(tol) {
    ActiveIndices act = active_indices(x - u, spec.C, tol);
    require(!act.outside, "CoderivativeFamily: x - u outside C");
    Vector cone_part = w - spec.f.eval(x, a);
    if (!act.active.empty()) {
      Matrix Ga = gather_columns(spec.C, act.active);
      NnlsResult fit = nnls(Ga, cone_part);
      require(fit.residual <= std::max(tol, 1e-7 * std::max(1.0, cone_part.norm())),
              "CoderivativeFamily: w not in the velocity set");
      w_multipliers_ = Vector::Zero(spec.C.count());
      for (size_t j = 0; j < act.active.size(); ++j)
        w_multipliers_[act.active[j]] = fit.x[static_cast<int>(j)];
    } else {
      require(cone_part.norm() <= std::max(tol, 1e-7),
              "CoderivativeFamily: w not in the velocity set");
      w_multipliers_ = Vector::Zero(spec.C.count());
    }
    partition_ = split_indices(y, act.active, spec.C, tol);
    fx_ = spec.f.grad_x(x, a);
    fa_ = spec.f.grad_a(x, a);
  }

  const ActiveIndexPartition& partition() const { return partition_; }
  const Vector& direction() const { return y_; }

  /// Domain pattern used by the optimality conditions: generators carrying a
  /// strictly positive multiplier of w must be orthogonal to y.
  bool domain_pattern_ok(double tol = kActiveTol) const {
    for (int i = 0; i < w_multipliers_.size(); ++i)
      if (w_multipliers_[i] > tol && std::abs(spec_.C.generator(i).dot(y_)) > tol) return false;
    return true;
  }

  struct Membership {
    bool contains = false;
    double residual = 0.0;
    Vector gamma;  // size m, zeros off the admissible support
  };

  /// Decides membership of z* = (zx, zu, za) by checking the a-block, the
  /// structural cancellation of the cone parts, and a sign-constrained fit of
  /// the u-block over the admissible generators.
  Membership contains(const Vector& zx, const Vector& zu, const Vector& za) const {
    Membership m;
    m.gamma = Vector::Zero(spec_.C.count());
    double res_a = (za - fa_.transpose() * y_).norm();
    double res_struct = ((zx - fx_.transpose() * y_) + zu).norm();

    IndexSet support = partition_.zero_part;
    std::vector<bool> nonneg;
    for (int i : partition_.zero_part) {
      (void)i;
      nonneg.push_back(false);
    }
    for (int i : partition_.pos_part) {
      support.push_back(i);
      nonneg.push_back(true);
    }
    double res_cone;
    if (support.empty()) {
      res_cone = zu.norm();
    } else {
      Matrix Gs(spec_.n(), static_cast<int>(support.size()));
      for (size_t c = 0; c < support.size(); ++c) Gs.col(static_cast<int>(c)) = spec_.C.generator(support[c]);
      NnlsResult fit = nnls_mixed(Gs, -zu, nonneg);
      res_cone = fit.residual;
      for (size_t c = 0; c < support.size(); ++c) m.gamma[support[c]] = fit.x[static_cast<int>(c)];
    }
    m.residual = std::max({res_a, res_struct, res_cone});
    m.contains = m.residual <= tol_;
    return m;
  }

  /// Random elements of the family.
  std::vector<std::array<Vector, 3>> sample(int count, std::mt19937_64& rng) const {
    std::normal_distribution<double> nd;
    std::vector<std::array<Vector, 3>> out;
    for (int s = 0; s < count; ++s) {
      Vector cone = Vector::Zero(spec_.n());
      for (int i : partition_.zero_part) cone += nd(rng) * spec_.C.generator(i);
      for (int i : partition_.pos_part) cone += std::abs(nd(rng)) * spec_.C.generator(i);
      out.push_back({Vector(fx_.transpose() * y_ + cone), Vector(-cone),
                     Vector(fa_.transpose() * y_)});
    }
    return out;
  }

 private:
  const ProblemSpec& spec_;
  Vector y_;
  double tol_;
  ActiveIndexPartition partition_;
  Vector w_multipliers_;
  Matrix fx_, fa_;
};

inline CoderivativeFamily coderivative_F_upper(const Vector& x, const Vector& u, const Vector& a,
                                               const Vector& w, const Vector& y,
                                               const ProblemSpec& spec, double tol = kActiveTol) {
  return CoderivativeFamily(x, u, a, w, spec, y, tol);
}

namespace detail {

/// Projection onto a cone given by generators: span of the free columns plus
/// nonnegative combinations of the rest.
inline Vector project_generated_cone(const Vector& v, const Matrix& cols,
                                     const std::vector<bool>& nonneg) {
  if (cols.cols() == 0) return Vector::Zero(v.size());
  NnlsResult fit = nnls_mixed(cols, v, nonneg);
  return cols * fit.x;
}

/// Projection onto { q : <g_i, q> <= 0 (i in rows), <w, q> = 0 } through the
/// Moreau decomposition; the polar is generated by the g_i (nonnegative) and
/// +-w (free span).
inline Vector project_polar_constrained(const Vector& v, const Matrix& ineq_normals,
                                        const Vector& w_axis) {
  int m = static_cast<int>(ineq_normals.cols());
  bool has_axis = w_axis.norm() > 0.0;
  Matrix cols(v.size(), m + (has_axis ? 1 : 0));
  std::vector<bool> nonneg;
  for (int i = 0; i < m; ++i) {
    cols.col(i) = ineq_normals.col(i);
    nonneg.push_back(true);
  }
  if (has_axis) {
    cols.col(m) = w_axis;
    nonneg.push_back(false);
  }
  return v - project_generated_cone(v, cols, nonneg);
}

}  // namespace detail

/// Brute-force description of the limiting normal cone to the graph of
/// G(x) = N(x; C) at a point (xbar, wbar) of the graph, for tiny dimensions.
/// The graph is the finite union of products F_S x K_S over index subsets S
/// (face of C times the cone spanned by the selected generators); regular
/// normal cones are constant on finitely many relative position classes near
/// the base point, which are discovered by sampling witnesses per piece.
class GraphNormalOracle {
 public:
  GraphNormalOracle(const Vector& xbar, const Vector& wbar, const GeneratorSet& C,
                    double tol = kActiveTol, unsigned seed = 99u)
      : C_(C), tol_(tol) {
    require(C.dim() <= 2 && C.count() <= 3, "GraphNormalOracle: tiny dimensions only");
    require(C.member(xbar, tol), "GraphNormalOracle: xbar outside C");
    const int m = C.count();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;

    std::vector<IndexSet> subsets;
    for (int mask = 0; mask < (1 << m); ++mask) {
      IndexSet S;
      for (int i = 0; i < m; ++i)
        if (mask & (1 << i)) S.push_back(i);
      subsets.push_back(S);
    }

    // Witness points on the graph near (xbar, wbar), plus the point itself.
    std::vector<std::pair<Vector, Vector>> witnesses;
    witnesses.emplace_back(xbar, wbar);
    const double delta = 1e-3 * std::max(1.0, xbar.norm() + wbar.norm());
    for (const IndexSet& S : subsets) {
      if (!x_in_face(xbar, S)) continue;
      std::optional<Vector> lam = w_multipliers(wbar, S);
      if (!lam) continue;  // wbar not representable on this piece
      for (int rep = 0; rep < 24; ++rep) {
        Vector tx(C.dim());
        for (int i = 0; i < C.dim(); ++i) tx[i] = nd(rng);
        Vector x_t = xbar + delta * project_face_tangent(tx, xbar, S);
        Vector lam_t = *lam;
        for (int c = 0; c < lam_t.size(); ++c)
          lam_t[c] = std::max(0.0, lam_t[c] + delta * nd(rng));
        Vector w_t = Vector::Zero(C.dim());
        for (size_t c = 0; c < S.size(); ++c) w_t += lam_t[static_cast<int>(c)] * C.generator(S[c]);
        witnesses.emplace_back(x_t, w_t);
      }
    }

    // Classify witnesses by which pieces contain them; keep one per class.
    std::vector<long> seen;
    for (const auto& wit : witnesses) {
      long mask = 0;
      for (size_t s = 0; s < subsets.size(); ++s)
        if (x_in_face(wit.first, subsets[s]) && w_multipliers(wit.second, subsets[s]).has_value())
          mask |= (1L << s);
      if (mask == 0) continue;
      bool known = false;
      for (long sm : seen)
        if (sm == mask) known = true;
      if (known) continue;
      seen.push_back(mask);
      Class cls;
      cls.x = wit.first;
      cls.w = wit.second;
      for (size_t s = 0; s < subsets.size(); ++s)
        if (mask & (1L << s)) cls.pieces.push_back(subsets[s]);
      classes_.push_back(std::move(cls));
    }
  }

  /// Membership of (vx, vw) in the limiting normal cone.
  bool contains(const Vector& vx, const Vector& vw, double tol) const {
    for (const Class& cls : classes_)
      if (class_contains(cls, vx, vw, tol)) return true;
    return false;
  }

  /// Distance from (vx, vw) to the limiting normal cone (min over classes).
  double distance(const Vector& vx, const Vector& vw) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Class& cls : classes_) {
      double dx = (project_class_x(cls, vx) - vx).norm();
      double dw = (project_class_w(cls, vw) - vw).norm();
      best = std::min(best, std::sqrt(dx * dx + dw * dw));
    }
    return best;
  }

  /// Ray generators sampled from every class cone (normalized, deduplicated).
  std::vector<std::pair<Vector, Vector>> sample_rays(int per_class, unsigned seed = 3u) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<std::pair<Vector, Vector>> rays;
    for (const Class& cls : classes_) {
      for (int s = 0; s < per_class; ++s) {
        Vector vx(C_.dim()), vw(C_.dim());
        for (int i = 0; i < C_.dim(); ++i) {
          vx[i] = nd(rng);
          vw[i] = nd(rng);
        }
        Vector px = project_class_x(cls, vx);
        Vector pw = project_class_w(cls, vw);
        double norm = std::sqrt(px.squaredNorm() + pw.squaredNorm());
        if (norm < 1e-10) continue;
        rays.emplace_back(px, pw);
      }
    }
    return rays;
  }

  /// Elements of the coderivative slice D*G(y) = { q : (q, -y) in N(graph) }:
  /// per class the product structure makes the slice either empty or the
  /// class's x-factor.
  std::vector<Vector> coderivative_elements(const Vector& y, int samples,
                                            unsigned seed = 5u) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Vector> out;
    for (const Class& cls : classes_) {
      Vector neg_y = -y;
      Vector pw = project_class_w(cls, neg_y);
      if ((pw - neg_y).norm() > tol_) continue;  // -y not in the w-factor
      for (int s = 0; s < samples; ++s) {
        Vector vx(C_.dim());
        for (int i = 0; i < C_.dim(); ++i) vx[i] = nd(rng);
        out.push_back(project_class_x(cls, vx));
      }
      out.push_back(Vector::Zero(C_.dim()));
    }
    return out;
  }

  bool coderivative_contains(const Vector& q, const Vector& y, double tol) const {
    return contains(q, -y, tol);
  }

  int class_count() const { return static_cast<int>(classes_.size()); }

 private:
  struct Class {
    Vector x, w;
    std::vector<IndexSet> pieces;
  };

  bool x_in_face(const Vector& x, const IndexSet& S) const {
    Vector vals = C_.evaluate(x);
    for (int i = 0; i < C_.count(); ++i) {
      bool in_S = contains_index(S, i);
      if (in_S && std::abs(vals[i]) > tol_) return false;
      if (!in_S && vals[i] > tol_) return false;
    }
    return true;
  }

  /// Multipliers of w on cone{g_i : i in S}; nullopt when w is not in the
  /// cone.
  std::optional<Vector> w_multipliers(const Vector& w, const IndexSet& S) const {
    if (S.empty()) {
      if (w.norm() <= tol_) return Vector::Zero(0);
      return std::nullopt;
    }
    Matrix cols = gather_columns(C_, S);
    NnlsResult fit = nnls(cols, w);
    if (fit.residual > tol_) return std::nullopt;
    return fit.x;
  }

  /// Projects v onto the tangent cone of the face F_S at x (equalities on S,
  /// active inequalities elsewhere), via the polar generated cone.
  Vector project_face_tangent(const Vector& v, const Vector& x, const IndexSet& S) const {
    Vector vals = C_.evaluate(x);
    Matrix cols(C_.dim(), 0);
    std::vector<bool> nonneg;
    auto push = [&](const Vector& g, bool nn) {
      cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
      cols.col(cols.cols() - 1) = g;
      nonneg.push_back(nn);
    };
    for (int i = 0; i < C_.count(); ++i) {
      if (contains_index(S, i))
        push(C_.generator(i), false);
      else if (std::abs(vals[i]) <= tol_)
        push(C_.generator(i), true);
    }
    if (cols.cols() == 0) return v;
    return v - detail::project_generated_cone(v, cols, nonneg);
  }

  /// x-factor of the class cone: intersection over pieces of
  /// span{g_i : i in S} + cone{g_j : j active at x, j not in S}.
  Vector project_class_x(const Class& cls, const Vector& v) const {
    Vector p = v;
    std::vector<Vector> corrections(cls.pieces.size(), Vector::Zero(C_.dim()));
    for (int sweep = 0; sweep < 400; ++sweep) {
      Vector prev = p;
      for (size_t s = 0; s < cls.pieces.size(); ++s) {
        Vector arg = p + corrections[s];
        Vector proj = project_piece_normal_x(cls, cls.pieces[s], arg);
        corrections[s] = arg - proj;
        p = proj;
      }
      if ((p - prev).norm() < 1e-14) break;
    }
    return p;
  }

  Vector project_piece_normal_x(const Class& cls, const IndexSet& S, const Vector& v) const {
    Vector vals = C_.evaluate(cls.x);
    Matrix cols(C_.dim(), 0);
    std::vector<bool> nonneg;
    auto push = [&](const Vector& g, bool nn) {
      cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
      cols.col(cols.cols() - 1) = g;
      nonneg.push_back(nn);
    };
    for (int i = 0; i < C_.count(); ++i) {
      if (contains_index(S, i))
        push(C_.generator(i), false);
      else if (std::abs(vals[i]) <= tol_)
        push(C_.generator(i), true);
    }
    return detail::project_generated_cone(v, cols, nonneg);
  }

  /// w-factor of the class cone: intersection over pieces of
  /// { q : <g_i, q> <= 0 (i in S), <w, q> = 0 }.
  Vector project_class_w(const Class& cls, const Vector& v) const {
    Vector p = v;
    std::vector<Vector> corrections(cls.pieces.size(), Vector::Zero(C_.dim()));
    for (int sweep = 0; sweep < 400; ++sweep) {
      Vector prev = p;
      for (size_t s = 0; s < cls.pieces.size(); ++s) {
        Vector arg = p + corrections[s];
        Vector proj = project_piece_normal_w(cls, cls.pieces[s], arg);
        corrections[s] = arg - proj;
        p = proj;
      }
      if ((p - prev).norm() < 1e-14) break;
    }
    return p;
  }

  Vector project_piece_normal_w(const Class& cls, const IndexSet& S, const Vector& v) const {
    Matrix cols = gather_columns(C_, S);
    return detail::project_polar_constrained(v, cols, cls.w);
  }

  bool class_contains(const Class& cls, const Vector& vx, const Vector& vw, double tol) const {
    return (project_class_x(cls, vx) - vx).norm() <= tol &&
           (project_class_w(cls, vw) - vw).norm() <= tol;
  }

  GeneratorSet C_;
  double tol_;
  std::vector<Class> classes_;
};

inline GraphNormalOracle limiting_normal_graph_oracle(const Vector& xbar, const Vector& wbar,
                                                      const GeneratorSet& C,
                                                      double tol = kActiveTol) {
  return GraphNormalOracle(xbar, wbar, C, tol);
}

struct EqualityCheckResult {
  bool independent = false;        // active generators linearly independent
  double forward_violation = 0.0;  // oracle elements escaping the family
  double reverse_violation = 0.0;  // family elements escaping the oracle
  int sampled_directions = 0;
};

/// Compares the structured family against the brute-force graph oracle,
/// mapped through the chain rule. Under linear independence both inclusions
/// are asserted; otherwise only the upper estimate (oracle inside family).
inline EqualityCheckResult coderivative_equality_check(const Vector& x, const Vector& u,
                                                       const Vector& a, const Vector& w,
                                                       const ProblemSpec& spec,
                                                       int sample_count = 256,
                                                       unsigned seed = 11u) {
  EqualityCheckResult out;
  ActiveIndices act = active_indices(x - u, spec.C);
  out.independent = linear_independence_check(gather_columns(spec.C, act.active));

  Vector cone_part = w - spec.f.eval(x, a);
  GraphNormalOracle oracle(x - u, cone_part, spec.C);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int n = spec.n();

  std::vector<Vector> directions;
  directions.push_back(Vector::Zero(n));
  for (int i = 0; i < spec.C.count(); ++i) {
    directions.push_back(spec.C.generator(i));
    directions.push_back(-spec.C.generator(i));
  }
  while (static_cast<int>(directions.size()) < sample_count) {
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = nd(rng);
    directions.push_back(y);
  }

  for (const Vector& y : directions) {
    CoderivativeFamily family(x, u, a, w, spec, y);
    if (!family.domain_pattern_ok()) continue;
    ++out.sampled_directions;

    // Oracle -> family (the upper estimate).
    for (const Vector& q : oracle.coderivative_elements(y, 12)) {
      Vector zx = spec.f.grad_x(x, a).transpose() * y + q;
      Vector zu = -q;
      Vector za = spec.f.grad_a(x, a).transpose() * y;
      auto mem = family.contains(zx, zu, za);
      out.forward_violation = std::max(out.forward_violation, mem.residual);
    }
    // Family -> oracle (exactness under independence).
    if (out.independent) {
      for (const auto& el : family.sample(12, rng)) {
        Vector q = el[0] - spec.f.grad_x(x, a).transpose() * y;
        out.reverse_violation = std::max(out.reverse_violation, oracle.distance(q, -y));
      }
    }
  }
  return out;
}

}  // namespace sweep
