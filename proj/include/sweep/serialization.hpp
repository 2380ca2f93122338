#pragma once

#include <fstream>
#include <json.hpp>

#include "sweep/discrete_optimizer.hpp"
#include "sweep/optimality_conditions.hpp"

namespace sweep {

using json = nlohmann::json;

namespace io {

inline json matrix_rows(const Matrix& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array())
    throw SweepError("parse error: " + what + " must be a non-empty array of arrays");
  Matrix M(rows.size(), rows[0].size());
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw SweepError("parse error: ragged rows in " + what);
    for (size_t c = 0; c < rows[r].size(); ++c) M(r, c) = rows[r][c].get<double>();
  }
  return M;
}

/// Node list: one array of length dim per node, stored column-wise.
inline json nodes(const Matrix& M) {
  json out = json::array();
  for (int c = 0; c < M.cols(); ++c) {
    json v = json::array();
    for (int r = 0; r < M.rows(); ++r) v.push_back(M(r, c));
    out.push_back(v);
  }
  return out;
}

inline Matrix nodes_from(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.empty()) throw SweepError("parse error: " + what + " empty");
  Matrix M(arr[0].size(), arr.size());
  for (size_t c = 0; c < arr.size(); ++c)
    for (size_t r = 0; r < arr[c].size(); ++r) M(r, c) = arr[c][r].get<double>();
  return M;
}

inline Vector vector_from(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw SweepError("parse error: " + what + " must be an array");
  Vector v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

inline json vec(const Vector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Matrix zero_or(const json& j, const std::string& key, int rows, int cols) {
  if (!j.contains(key)) return Matrix::Zero(rows, cols);
  Matrix M = matrix_from(j.at(key), key);
  if (M.rows() != rows || M.cols() != cols)
    throw SweepError("parse error: " + key + " has wrong shape");
  return M;
}

inline Vector zero_or_vec(const json& j, const std::string& key, int size) {
  if (!j.contains(key)) return Vector::Zero(size);
  Vector v = vector_from(j.at(key), key);
  if (v.size() != size) throw SweepError("parse error: " + key + " has wrong length");
  return v;
}

}  // namespace io

inline json to_json(const ProblemSpec& spec) {
  json j;
  j["n"] = spec.n();
  j["m"] = spec.C.count();
  j["d"] = spec.d();
  j["generators"] = io::matrix_rows(spec.C.columns().transpose());
  json f;
  f["kind"] = "affine";
  f["A"] = io::matrix_rows(spec.f.A);
  f["B"] = io::matrix_rows(spec.f.B);
  f["c"] = io::vec(spec.f.c);
  f["lipschitz_K"] = spec.f.lipschitz_K;
  f["growth_M"] = spec.f.growth_M;
  j["perturbation"] = f;
  j["x0"] = io::vec(spec.x0);
  j["u0"] = io::vec(spec.u0);
  j["a0"] = io::vec(spec.a0);
  j["r"] = spec.r;
  j["T"] = spec.T;
  j["tau"] = spec.tau;
  json phi;
  phi["kind"] = "quadratic";
  phi["Q"] = io::matrix_rows(spec.terminal.Q);
  phi["x_target"] = io::vec(spec.terminal.x_target);
  j["terminal_cost"] = phi;
  json ell;
  ell["kind"] = "quadratic";
  ell["Qx"] = io::matrix_rows(spec.running.Qx);
  ell["Qu"] = io::matrix_rows(spec.running.Qu);
  ell["Qa"] = io::matrix_rows(spec.running.Qa);
  ell["Rx"] = io::matrix_rows(spec.running.Rx);
  ell["Ru"] = io::matrix_rows(spec.running.Ru);
  ell["Ra"] = io::matrix_rows(spec.running.Ra);
  j["running_cost"] = ell;
  return j;
}

/// Parses and validates a problem file; violations are reported with the
/// offending field.
inline ProblemSpec problem_from_json(const json& j) {
  for (const char* key : {"n", "m", "d", "generators", "x0", "u0", "r", "T"})
    if (!j.contains(key)) throw SweepError("parse error: missing field '" + std::string(key) + "'");
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  if (n < 1 || m < 1 || d < 1) throw SweepError("invariant violation: n, m, d must be >= 1");

  Matrix gen_rows = io::matrix_from(j.at("generators"), "generators");
  if (gen_rows.rows() != m || gen_rows.cols() != n)
    throw SweepError("parse error: generators must be m x n");
  for (int i = 0; i < m; ++i)
    if (gen_rows.row(i).norm() == 0.0)
      throw SweepError("invariant violation: generators[" + std::to_string(i) + "] is zero");

  ProblemSpec spec;
  spec.C = GeneratorSet::from_rows(gen_rows);
  spec.x0 = io::vector_from(j.at("x0"), "x0");
  spec.u0 = io::vector_from(j.at("u0"), "u0");
  spec.a0 = io::zero_or_vec(j, "a0", d);
  if (spec.x0.size() != n || spec.u0.size() != n)
    throw SweepError("parse error: x0/u0 must have length n");
  spec.r = j.at("r").get<double>();
  spec.T = j.at("T").get<double>();
  spec.tau = j.value("tau", 0.0);
  if (spec.r <= 0) throw SweepError("invariant violation: r must be positive");
  if (spec.T <= 0) throw SweepError("invariant violation: T must be positive");
  if (spec.tau < 0 || spec.tau > std::min(spec.r, spec.T) + 1e-12)
    throw SweepError("invariant violation: tau must lie in [0, min{r, T}]");

  const json& f = j.at("perturbation");
  if (f.value("kind", "affine") != std::string("affine"))
    throw SweepError("parse error: perturbation.kind must be 'affine' for file-driven runs");
  Matrix A = io::zero_or(f, "A", n, n);
  Matrix B = io::zero_or(f, "B", n, d);
  Vector c = io::zero_or_vec(f, "c", n);
  spec.f = PerturbationField::affine(A, B, c);
  if (f.contains("lipschitz_K")) spec.f.lipschitz_K = f.at("lipschitz_K").get<double>();
  if (f.contains("growth_M")) spec.f.growth_M = f.at("growth_M").get<double>();

  const json& phi = j.at("terminal_cost");
  if (phi.value("kind", "quadratic") != std::string("quadratic"))
    throw SweepError("parse error: terminal_cost.kind must be 'quadratic'");
  spec.terminal = TerminalCost::quadratic_form(io::zero_or(phi, "Q", n, n),
                                               io::zero_or_vec(phi, "x_target", n));
  spec.running = RunningCost::zero(n, d);
  if (j.contains("running_cost")) {
    const json& ell = j.at("running_cost");
    if (ell.value("kind", "quadratic") != std::string("quadratic"))
      throw SweepError("parse error: running_cost.kind must be 'quadratic'");
    spec.running.Qx = io::zero_or(ell, "Qx", n, n);
    spec.running.Qu = io::zero_or(ell, "Qu", n, n);
    spec.running.Qa = io::zero_or(ell, "Qa", d, d);
    spec.running.Rx = io::zero_or(ell, "Rx", n, n);
    spec.running.Ru = io::zero_or(ell, "Ru", n, n);
    spec.running.Ra = io::zero_or(ell, "Ra", d, d);
    spec.running.qx = io::zero_or_vec(ell, "qx", n);
    spec.running.qu = io::zero_or_vec(ell, "qu", n);
    spec.running.qa = io::zero_or_vec(ell, "qa", d);
  }

  Vector vals = spec.C.evaluate(spec.x0 - spec.u0);
  for (int i = 0; i < m; ++i)
    if (vals[i] > kActiveTol)
      throw SweepError("invariant violation: x0 infeasible, <g_" + std::to_string(i + 1) +
                       ", x0 - u0> = " + std::to_string(vals[i]) + " > 0");
  return spec;
}

inline ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SweepError("cannot open problem file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw SweepError("parse error in " + path + ": " + e.what());
  }
  return problem_from_json(j);
}

inline json to_json(const DiscreteTriple& z) {
  json j;
  j["k"] = z.mesh.k;
  j["T"] = z.mesh.T;
  j["h"] = z.mesh.h;
  j["j_tau"] = z.mesh.j_tau;
  j["j_tau_upper"] = z.mesh.j_tau_upper;
  j["x"] = io::nodes(z.x);
  j["u"] = io::nodes(z.u);
  j["a"] = io::nodes(z.a);
  return j;
}

inline DiscreteTriple triple_from_json(const json& j, double tau = 0.0) {
  DiscreteTriple z;
  z.mesh = Mesh(j.at("k").get<int>(), j.at("T").get<double>(), tau);
  z.x = io::nodes_from(j.at("x"), "x");
  z.u = io::nodes_from(j.at("u"), "u");
  z.a = io::nodes_from(j.at("a"), "a");
  if (z.x.cols() != z.mesh.k + 1 || z.u.cols() != z.mesh.k + 1 || z.a.cols() != z.mesh.k + 1)
    throw SweepError("parse error: triple node count does not match k+1");
  return z;
}

inline json to_json(const DualCertificate& c) {
  json j;
  j["lambda"] = c.lambda;
  j["eta"] = io::nodes(c.eta);
  j["xi"] = io::vec(c.xi);
  j["p_x"] = io::nodes(c.p_x);
  j["p_u"] = io::nodes(c.p_u);
  j["p_a"] = io::nodes(c.p_a);
  j["gamma"] = io::nodes(c.gamma);
  j["w_x"] = io::nodes(c.w_x);
  j["w_u"] = io::nodes(c.w_u);
  j["w_a"] = io::nodes(c.w_a);
  j["v_x"] = io::nodes(c.v_x);
  j["v_u"] = io::nodes(c.v_u);
  j["v_a"] = io::nodes(c.v_a);
  j["theta_x"] = io::nodes(c.theta_x);
  j["theta_u"] = io::nodes(c.theta_u);
  j["theta_a"] = io::nodes(c.theta_a);
  j["chi"] = io::nodes(c.chi);
  j["rank_deficient"] = c.rank_deficient;
  j["recovery_residual"] = c.recovery_residual;
  return j;
}

inline DualCertificate certificate_from_json(const json& j) {
  DualCertificate c;
  c.lambda = j.at("lambda").get<double>();
  c.eta = io::nodes_from(j.at("eta"), "eta");
  c.xi = io::vector_from(j.at("xi"), "xi");
  c.p_x = io::nodes_from(j.at("p_x"), "p_x");
  c.p_u = io::nodes_from(j.at("p_u"), "p_u");
  c.p_a = io::nodes_from(j.at("p_a"), "p_a");
  c.gamma = io::nodes_from(j.at("gamma"), "gamma");
  c.w_x = io::nodes_from(j.at("w_x"), "w_x");
  c.w_u = io::nodes_from(j.at("w_u"), "w_u");
  c.w_a = io::nodes_from(j.at("w_a"), "w_a");
  c.v_x = io::nodes_from(j.at("v_x"), "v_x");
  c.v_u = io::nodes_from(j.at("v_u"), "v_u");
  c.v_a = io::nodes_from(j.at("v_a"), "v_a");
  c.theta_x = io::nodes_from(j.at("theta_x"), "theta_x");
  c.theta_u = io::nodes_from(j.at("theta_u"), "theta_u");
  c.theta_a = io::nodes_from(j.at("theta_a"), "theta_a");
  c.chi = io::nodes_from(j.at("chi"), "chi");
  c.rank_deficient = j.value("rank_deficient", false);
  c.recovery_residual = j.value("recovery_residual", 0.0);
  return c;
}

inline json to_json(const ResidualTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row;
    row["family"] = r.family;
    row["j"] = r.j;
    row["i"] = r.i;
    row["value"] = r.value;
    rows.push_back(row);
  }
  return rows;
}

inline json to_json(const ResidualReport& r) {
  json j;
  j["residuals"] = r.residuals;
  j["nontriviality"] = r.nontriviality;
  j["nontriviality_strict"] = r.nontriviality_strict;
  j["generators_independent"] = r.generators_independent;
  j["tol"] = r.tol;
  j["pass"] = r.pass;
  j["max_residual"] = r.max_residual();
  return j;
}

inline json to_json(const SolveResult& r) {
  json j;
  j["J_value"] = r.J_value;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["stationarity"] = r.stationarity;
  j["max_constraint_violation"] = r.max_constraint_violation;
  j["z"] = to_json(r.z);
  j["residual_rows"] = to_json(r.residuals);
  return j;
}

inline json to_json(const FeasibilityReport& r) {
  json j;
  j["mu"] = r.constants.mu;
  j["mu_tilde"] = r.constants.mu_tilde;
  j["mu_tilde_alt"] = r.constants.mu_tilde_alt;
  j["eps_k"] = r.constants.eps_k;
  j["max_state_gap"] = r.max_state_gap;
  j["variation_of_u_dot"] = r.variation_of_u_dot;
  j["first_u_quotient"] = r.first_u_quotient;
  j["max_u_norm_drift"] = r.max_u_norm_drift;
  j["max_renorm_shift"] = r.max_renorm_shift;
  j["w12_velocity_gap"] = r.w12_velocity_gap;
  j["initial_velocity_gap"] = r.initial_velocity_gap;
  j["gap_within_bound"] = r.gap_within_bound;
  j["variation_within_bound"] = r.variation_within_bound;
  j["residual_rows"] = to_json(r.residuals);
  return j;
}

inline json to_json(const ContinuousPath& p) {
  json j;
  Vector t = p.times();
  j["times"] = io::vec(t);
  j["x"] = io::nodes(p.x_nodes());
  j["u"] = io::nodes(p.u_nodes());
  j["a"] = io::nodes(p.a_nodes());
  return j;
}

inline ContinuousPath path_from_json(const json& j) {
  return ContinuousPath(io::vector_from(j.at("times"), "times"), io::nodes_from(j.at("x"), "x"),
                        io::nodes_from(j.at("u"), "u"), io::nodes_from(j.at("a"), "a"));
}

/// CSV with full precision: t, x_1..x_n, u_1..u_n, a_1..a_d.
inline void write_trajectory_csv(const ContinuousPath& p, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << "t";
  for (int i = 1; i <= p.state_dim(); ++i) out << ",x" << i;
  for (int i = 1; i <= p.shift_dim(); ++i) out << ",u" << i;
  for (int i = 1; i <= p.control_dim(); ++i) out << ",a" << i;
  out << "\n";
  char buf[64];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (int j = 0; j < p.times().size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.times()[j]);
    out << buf;
    for (int i = 0; i < p.state_dim(); ++i) emit(p.x_nodes()(i, j));
    for (int i = 0; i < p.shift_dim(); ++i) emit(p.u_nodes()(i, j));
    for (int i = 0; i < p.control_dim(); ++i) emit(p.a_nodes()(i, j));
    out << "\n";
  }
}

inline void write_study_csv(const ConvergenceStudy& study, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << "k,J_k,e52_sum,e50_first,e50_second\n";
  char buf[64];
  for (const auto& row : study.rows) {
    out << row.k;
    for (double v : {row.J, row.e52_sum, row.e50_first, row.e50_second}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << "\n";
  }
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open: " + path);
  json j;
  in >> j;
  return j;
}

}  // namespace sweep
