#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sweep/serialization.hpp"

namespace fs = std::filesystem;
using namespace sweep;

namespace {

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run(const std::string& args) {
  std::string out_file = "cli_stdout_tmp.txt";
  std::string cmd = std::string(SWEEPCTL_BIN) + " " + args + " > " + out_file + " 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(out_file);
  return {WEXITSTATUS(rc), ss.str()};
}

std::string sec8_path() { return std::string(PROBLEMS_DIR) + "/sec8.json"; }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("worked-instance subcommand reproduces the stationary values", "[cli]") {
  fs::remove_all("cli_out_ex81");
  RunResult r = run("example81 --k 1 --out cli_out_ex81 " + sec8_path());
  INFO(r.stdout_text);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.stdout_text.find("a0 -0.5") != std::string::npos);
  REQUIRE(r.stdout_text.find("J 0.25") != std::string::npos);
  REQUIRE(r.stdout_text.find("PASS") != std::string::npos);
  REQUIRE(fs::exists("cli_out_ex81/triple.json"));
  REQUIRE(fs::exists("cli_out_ex81/certificate.json"));
  REQUIRE(fs::exists("cli_out_ex81/manifest.json"));
  REQUIRE(fs::exists("cli_out_ex81/trajectory.csv"));
}

TEST_CASE("solve agrees with the worked instance", "[cli]") {
  fs::remove_all("cli_out_solve");
  RunResult r = run("solve --k 10 --out cli_out_solve " + sec8_path());
  INFO(r.stdout_text);
  REQUIRE(r.exit_code == 0);
  json res = read_json("cli_out_solve/solve_result.json");
  REQUIRE(std::abs(res.at("J_value").get<double>() - 0.25) <= 1e-4);
}

TEST_CASE("check flags a tampered certificate with exit code 2", "[cli]") {
  fs::remove_all("cli_out_base");
  REQUIRE(run("example81 --k 3 --out cli_out_base " + sec8_path()).exit_code == 0);
  json cert = read_json("cli_out_base/certificate.json");
  cert["p_x"][3][0] = cert["p_x"][3][0].get<double>() + 0.25;
  write_json(cert, "cli_out_base/tampered.json");
  RunResult r = run("check --triple cli_out_base/triple.json --certificate "
                    "cli_out_base/tampered.json --out cli_out_check " +
                    sec8_path());
  INFO(r.stdout_text);
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.stdout_text.find("FAIL") != std::string::npos);
  REQUIRE(r.stdout_text.find("transversality_x") != std::string::npos);

  RunResult ok = run("check --triple cli_out_base/triple.json --certificate "
                     "cli_out_base/certificate.json --out cli_out_check2 " +
                     sec8_path());
  REQUIRE(ok.exit_code == 0);
}

TEST_CASE("study writes a nonincreasing ladder", "[cli]") {
  fs::remove_all("cli_out_study");
  RunResult r = run("study --ks 5,10,20 --out cli_out_study " + sec8_path());
  INFO(r.stdout_text);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.stdout_text.find("nonincreasing") != std::string::npos);
  std::string csv = slurp("cli_out_study/study.csv");
  REQUIRE(csv.rfind("k,J_k,e52_sum,e50_first,e50_second", 0) == 0);
  int lines = static_cast<int>(std::count(csv.begin(), csv.end(), '\n'));
  REQUIRE(lines == 4);
}

TEST_CASE("simulate writes a feasible trajectory", "[cli]") {
  fs::remove_all("cli_out_sim");
  RunResult r = run("simulate --k 25 --out cli_out_sim " + sec8_path());
  REQUIRE(r.exit_code == 0);
  std::string csv = slurp("cli_out_sim/trajectory.csv");
  REQUIRE(csv.rfind("t,x1,u1,a1", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 27);  // header + 26 nodes
}

TEST_CASE("approximate certifies the construction bound", "[cli]") {
  fs::remove_all("cli_out_approx");
  RunResult r = run("approximate --k 12 --out cli_out_approx " + sec8_path());
  INFO(r.stdout_text);
  REQUIRE(r.exit_code == 0);
  json rep = read_json("cli_out_approx/feasibility_report.json");
  REQUIRE(rep.at("gap_within_bound").get<bool>());
}

TEST_CASE("identical runs produce byte-identical artifacts", "[cli]") {
  fs::remove_all("cli_det_a");
  fs::remove_all("cli_det_b");
  REQUIRE(run("solve --k 8 --seed 7 --out cli_det_a " + sec8_path()).exit_code == 0);
  REQUIRE(run("solve --k 8 --seed 7 --out cli_det_b " + sec8_path()).exit_code == 0);
  REQUIRE(slurp("cli_det_a/solve_result.json") == slurp("cli_det_b/solve_result.json"));
  REQUIRE(slurp("cli_det_a/trajectory.csv") == slurp("cli_det_b/trajectory.csv"));
}

TEST_CASE("malformed input exits with an error", "[cli]") {
  RunResult r = run("solve --k 4 --out cli_out_bad does_not_exist.json");
  REQUIRE(r.exit_code == 1);
  REQUIRE(r.stdout_text.find("error") != std::string::npos);
}
