// Batch front end for the sweeping-process toolkit: simulate trajectories,
// build feasible discrete approximations, solve the discrete control
// problem, verify optimality certificates and run convergence studies.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "sweep/serialization.hpp"

namespace fs = std::filesystem;
using namespace sweep;

namespace {

constexpr const char* kVersion = "sweepctl 1.0.0";

int verbosity() {
  const char* env = std::getenv("SWEEP_LOG");
  return env ? std::atoi(env) : 0;
}

struct CommonOpts {
  std::string problem;
  std::string out_dir = "out";
  double tol = 1e-8;
  unsigned seed = 0;
  double tau = -1.0;  // <0 keeps the problem file's value
};

json manifest_base(const std::string& command, const CommonOpts& c) {
  json m;
  m["command"] = command;
  m["problem"] = c.problem;
  m["out_dir"] = c.out_dir;
  m["tol"] = c.tol;
  m["seed"] = c.seed;
  m["version"] = kVersion;
  return m;
}

void finish_manifest(json& m, const CommonOpts& c,
                     std::chrono::steady_clock::time_point start) {
  m["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fs::create_directories(c.out_dir);
  write_json(m, c.out_dir + "/manifest.json");
}

ProblemSpec load(const CommonOpts& c) {
  ProblemSpec spec = load_problem(c.problem);
  if (c.tau >= 0.0) spec.tau = c.tau;
  spec.validate();
  return spec;
}

ContinuousPath default_reference(const ProblemSpec& spec, int k) {
  OptimizerConfig cfg;
  Mesh mesh(k, spec.T, spec.tau);
  SolveResult fp = solve_Pk_fixed_point(spec, mesh, cfg);
  return fp.z.interpolate();
}

std::vector<int> parse_ks(const std::string& csv) {
  std::vector<int> ks;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    ks.push_back(std::stoi(csv.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  require(!ks.empty(), "--ks: expected a comma-separated list of step counts");
  return ks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbed polyhedral sweeping process toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOpts common;
  int k = 10;
  std::string ks_csv = "10,20,40,80";
  std::string mode = "fixed_point";
  std::string reference_path, controls_path, triple_path, cert_path;
  std::string which = "explicit";
  std::string alpha_csv, beta_csv;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("problem", common.problem, "problem JSON file")->required();
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--tol", common.tol, "residual tolerance");
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_option("--tau", common.tau, "override the band parameter tau");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "integrate the sweeping dynamics");
  add_common(simulate);
  simulate->add_option("--k", k, "step count");
  simulate->add_option("--controls", controls_path, "controls as trajectory JSON");

  CLI::App* approximate =
      app.add_subcommand("approximate", "feasible discrete approximation of a reference");
  add_common(approximate);
  approximate->add_option("--k", k, "step count");
  approximate->add_option("--reference", reference_path, "reference trajectory JSON");

  CLI::App* solve = app.add_subcommand("solve", "solve the discrete control problem");
  add_common(solve);
  solve->add_option("--k", k, "step count");
  solve->add_option("--mode", mode, "fixed_point | reference");
  solve->add_option("--reference", reference_path, "anchor trajectory JSON (reference mode)");

  CLI::App* check = app.add_subcommand("check", "verify an optimality certificate");
  add_common(check);
  check->add_option("--triple", triple_path, "discrete triple JSON")->required();
  check->add_option("--certificate", cert_path, "certificate JSON")->required();
  check->add_option("--reference", reference_path, "reference trajectory JSON");
  check->add_option("--which", which, "explicit | el");

  CLI::App* study = app.add_subcommand("study", "convergence diagnostics over a mesh ladder");
  add_common(study);
  study->add_option("--ks", ks_csv, "comma-separated step counts");
  study->add_option("--reference", reference_path, "reference trajectory JSON");

  CLI::App* ex81 = app.add_subcommand("example81", "closed-form solve of the worked instance");
  add_common(ex81);
  ex81->add_option("--k", k, "step count");
  ex81->add_option("--mode", mode, "fixed_point | reference");
  ex81->add_option("--alpha", alpha_csv, "reference x-increments (reference mode)");
  ex81->add_option("--beta", beta_csv, "reference a-increments (reference mode)");

  CLI11_PARSE(app, argc, argv);
  auto start = std::chrono::steady_clock::now();

  try {
    if (simulate->parsed()) {
      ProblemSpec spec = load(common);
      ContinuousPath controls = controls_path.empty()
                                    ? constant_controls(spec)
                                    : path_from_json(read_json(controls_path));
      ContinuousPath traj = catching_up_integrate(spec, controls, k);
      fs::create_directories(common.out_dir);
      write_trajectory_csv(traj, common.out_dir + "/trajectory.csv");
      json m = manifest_base("simulate", common);
      m["k"] = k;
      m["controls"] = controls_path;
      finish_manifest(m, common, start);
      if (verbosity() > 0) std::cout << "trajectory written\n";
      return 0;
    }

    if (approximate->parsed()) {
      ProblemSpec spec = load(common);
      Mesh mesh(k, spec.T, spec.tau);
      ContinuousPath reference = reference_path.empty()
                                     ? default_reference(spec, k)
                                     : path_from_json(read_json(reference_path));
      auto [z, report] = approximate_feasible(reference, spec, mesh);
      fs::create_directories(common.out_dir);
      write_json(to_json(z), common.out_dir + "/triple.json");
      write_json(to_json(report), common.out_dir + "/feasibility_report.json");
      write_trajectory_csv(z.interpolate(), common.out_dir + "/trajectory.csv");
      json m = manifest_base("approximate", common);
      m["k"] = k;
      m["reference"] = reference_path;
      finish_manifest(m, common, start);
      std::cout << "max_state_gap " << report.max_state_gap << " (bound " << report.constants.eps_k
                << ")\n";
      return report.gap_within_bound ? 0 : 2;
    }

    if (solve->parsed()) {
      ProblemSpec spec = load(common);
      Mesh mesh(k, spec.T, spec.tau);
      OptimizerConfig cfg;
      cfg.seed = common.seed;
      SolveResult result;
      if (mode == "fixed_point") {
        result = solve_Pk_fixed_point(spec, mesh, cfg);
      } else {
        require(mode == "reference", "--mode must be fixed_point or reference");
        ContinuousPath reference = reference_path.empty()
                                       ? default_reference(spec, k)
                                       : path_from_json(read_json(reference_path));
        result = solve_Pk(spec, reference, mesh, cfg);
      }
      fs::create_directories(common.out_dir);
      write_json(to_json(result), common.out_dir + "/solve_result.json");
      write_trajectory_csv(result.z.interpolate(), common.out_dir + "/trajectory.csv");
      json m = manifest_base("solve", common);
      m["k"] = k;
      m["mode"] = mode;
      m["reference"] = reference_path;
      finish_manifest(m, common, start);
      std::cout << "J " << result.J_value << " converged " << (result.converged ? 1 : 0) << "\n";
      return result.converged ? 0 : 2;
    }

    if (check->parsed()) {
      ProblemSpec spec = load(common);
      DiscreteTriple z = triple_from_json(read_json(triple_path), spec.tau);
      DualCertificate cert = certificate_from_json(read_json(cert_path));
      ContinuousPath reference = reference_path.empty()
                                     ? z.interpolate()
                                     : path_from_json(read_json(reference_path));
      ResidualReport rep = which == "el" ? residual_EL(z, cert, reference, spec, common.tol)
                                         : residual_explicit(z, cert, reference, spec, common.tol);
      fs::create_directories(common.out_dir);
      write_json(to_json(rep), common.out_dir + "/residual_report.json");
      json m = manifest_base("check", common);
      m["triple"] = triple_path;
      m["certificate"] = cert_path;
      m["which"] = which;
      finish_manifest(m, common, start);
      for (const auto& [key, value] : rep.residuals)
        std::cout << key << " " << value << (value <= common.tol ? "" : "  <-- FAIL") << "\n";
      std::cout << "nontriviality " << rep.nontriviality << "\n";
      std::cout << (rep.pass ? "PASS" : "FAIL") << "\n";
      return rep.pass ? 0 : 2;
    }

    if (study->parsed()) {
      ProblemSpec spec = load(common);
      std::vector<int> ks = parse_ks(ks_csv);
      int kmax = *std::max_element(ks.begin(), ks.end());
      ContinuousPath reference = reference_path.empty()
                                     ? default_reference(spec, kmax)
                                     : path_from_json(read_json(reference_path));
      OptimizerConfig cfg;
      cfg.seed = common.seed;
      ConvergenceStudy result = convergence_study(spec, reference, ks, cfg);
      fs::create_directories(common.out_dir);
      write_study_csv(result, common.out_dir + "/study.csv");
      json m = manifest_base("study", common);
      m["ks"] = ks;
      m["reference"] = reference_path;
      m["nonincreasing"] = result.nonincreasing;
      finish_manifest(m, common, start);
      for (const auto& row : result.rows)
        std::cout << "k " << row.k << " J " << row.J << " e52 " << row.e52_sum << "\n";
      std::cout << (result.nonincreasing ? "nonincreasing" : "NOT nonincreasing") << "\n";
      return result.nonincreasing ? 0 : 2;
    }

    if (ex81->parsed()) {
      ProblemSpec spec = load(common);
      Example81Result result;
      if (mode == "fixed_point") {
        result = example81_solve(spec, k, Example81Mode::fixed_point);
      } else {
        require(mode == "reference", "--mode must be fixed_point or reference");
        Vector alpha(k), beta(k);
        auto fill = [&](const std::string& csv, Vector& v, const char* what) {
          std::vector<int> dummy;
          (void)dummy;
          size_t pos = 0;
          int idx = 0;
          while (pos < csv.size() && idx < k) {
            size_t comma = csv.find(',', pos);
            if (comma == std::string::npos) comma = csv.size();
            v[idx++] = std::stod(csv.substr(pos, comma - pos));
            pos = comma + 1;
          }
          require(idx == k, std::string(what) + ": expected " + std::to_string(k) + " values");
        };
        fill(alpha_csv, alpha, "--alpha");
        fill(beta_csv, beta, "--beta");
        result = example81_solve(spec, k, Example81Mode::given_reference, alpha, beta);
      }
      ResidualReport rep =
          residual_explicit(result.z, result.cert, result.reference, spec, common.tol);
      MuConstants consts = mu_constants(result.reference, spec, result.z.mesh);
      double J = cost_Jk(result.z, result.reference, spec, consts.mu_tilde);
      fs::create_directories(common.out_dir);
      write_json(to_json(result.z), common.out_dir + "/triple.json");
      write_json(to_json(result.cert), common.out_dir + "/certificate.json");
      write_json(to_json(rep), common.out_dir + "/residual_report.json");
      write_trajectory_csv(result.z.interpolate(), common.out_dir + "/trajectory.csv");
      json m = manifest_base("example81", common);
      m["k"] = k;
      m["mode"] = mode;
      finish_manifest(m, common, start);
      std::cout << "a0 " << result.z.a(0, 0) << " xk " << result.z.x(0, k) << " J " << J
                << " certificate " << (rep.pass ? "PASS" : "FAIL") << "\n";
      return rep.pass ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
