#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = HDEEPC_TEST_DATA;
const fs::path kConfigs = HDEEPC_CONFIG_DIR;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("hdeepc_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result cli(const std::string& args, const Scratch& s) {
  const fs::path out = s.dir / "stdout.txt", err = s.dir / "stderr.txt";
  const std::string cmd = std::string("\"") + HDEEPC_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> k;
  for (auto it = j.begin(); it != j.end(); ++it) k.insert(it.key());
  return k;
}

}  // namespace

TEST_CASE("run writes the golden csv header and summary keys") {
  Scratch s;
  const Result r = cli("run " + quoted(kData / "small_coupled8.json") + " --out-dir " + quoted(s.dir), s);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(s.dir / "small_coupled8_trajectory.csv");
  CHECK(csv.rfind("t,u1,u2,y1,y2,y3,r1,r2,r3,stage_cost,solve_time,status\n", 0) == 0);
  // Header plus one row per step.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  const json summary = json::parse(slurp(s.dir / "small_coupled8_summary.json"));
  const std::set<std::string> golden = {"assumptions",   "condensed_equality_rows", "equality_rows",
                                        "mean_solve_time", "mean_stage_cost",       "moved_outputs",
                                        "scenario",      "scp_not_converged",       "seed",
                                        "statuses",      "steps",                   "total_cost",
                                        "variant"};
  CHECK(keys_of(summary) == golden);
  CHECK(keys_of(summary["assumptions"]) == std::set<std::string>{"achieved_rank", "all_pass", "coupling",
                                                                  "excitation", "initial_state", "required_rank",
                                                                  "warnings"});
  CHECK(summary["variant"] == "HDeePC");
  CHECK(summary["steps"] == 6);
  CHECK(summary["seed"] == 3);
  // (m + p_u) T_ini with two inputs and two unknown outputs.
  CHECK(summary["condensed_equality_rows"] == 16);
  CHECK(json::parse(r.out) == summary);
}

TEST_CASE("seed override changes the noise but not the config") {
  Scratch s;
  const fs::path cfg = s.dir / "cfg.json";
  fs::copy_file(kData / "small_coupled8.json", cfg);
  const std::string before = slurp(cfg);
  const fs::path a = s.dir / "a", b = s.dir / "b", c = s.dir / "c";
  REQUIRE(cli("run " + quoted(cfg) + " --out-dir " + quoted(a), s).code == 0);
  REQUIRE(cli("run " + quoted(cfg) + " --out-dir " + quoted(b) + " --seed 3", s).code == 0);
  REQUIRE(cli("run " + quoted(cfg) + " --out-dir " + quoted(c) + " --seed 4", s).code == 0);
  CHECK(slurp(a / "small_coupled8_trajectory.csv").size() > 0);
  // Timing columns differ between runs; compare costs instead.
  const json ja = json::parse(slurp(a / "small_coupled8_summary.json"));
  const json jb = json::parse(slurp(b / "small_coupled8_summary.json"));
  const json jc = json::parse(slurp(c / "small_coupled8_summary.json"));
  CHECK(ja["total_cost"] == jb["total_cost"]);
  CHECK(ja["total_cost"] != jc["total_cost"]);
  CHECK(jc["seed"] == 4);
  CHECK(slurp(cfg) == before);
}

TEST_CASE("config errors exit with code 2 and name the key") {
  Scratch s;
  Result r = cli("run " + quoted(kData / "missing_plant.json") + " --out-dir " + quoted(s.dir), s);
  CHECK(r.code == 2);
  CHECK(r.err.find("'plant'") != std::string::npos);
  r = cli("audit " + quoted(kData / "unknown_key.json"), s);
  CHECK(r.code == 2);
  CHECK(r.err.find("controller.horizon") != std::string::npos);
  r = cli("run " + quoted(s.dir / "does_not_exist.json"), s);
  CHECK(r.code != 0);
  r = cli("frobnicate", s);
  CHECK(r.code == 2);
  r = cli("sweep " + quoted(kData / "small_coupled8.json") + " --sweep colour --values 1", s);
  CHECK(r.code == 2);
  r = cli("sweep " + quoted(kData / "small_coupled8.json") + " --sweep split --values 1,x", s);
  CHECK(r.code == 2);
}

TEST_CASE("unwritable output directory is an i/o error") {
  Scratch s;
  const fs::path blocker = s.dir / "file";
  std::ofstream(blocker) << "x";
  const Result r = cli("run " + quoted(kData / "small_coupled8.json") + " --out-dir " + quoted(blocker / "sub"), s);
  CHECK(r.code == 4);
}

TEST_CASE("audit reports") {
  Scratch s;
  Result r = cli("audit " + quoted(kData / "small_coupled8_deepc.json"), s);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["coupling"]["status"] == "not applicable");
  CHECK(rep["all_pass"] == true);

  r = cli("audit " + quoted(kData / "short_data.json"), s);
  REQUIRE(r.code == 0);
  rep = json::parse(r.out);
  CHECK(rep["excitation"]["status"] == "fail");
  CHECK(rep["required_rank"] == 34);
  CHECK(rep["achieved_rank"].get<int>() < 34);
  CHECK(rep["all_pass"] == false);
}

TEST_CASE("every shipped config passes the audit") {
  Scratch s;
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const Result r = cli("audit " + quoted(entry.path()), s);
    CAPTURE(entry.path().string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["all_pass"] == true);
  }
  CHECK(seen >= 13);
}

TEST_CASE("split sweep on the coupled drive with full state output") {
  Scratch s;
  const Result r = cli("sweep " + quoted(kData / "small_coupled8_full.json") +
                           " --sweep split --values 0,1,2,3,4,5,6,7,8 --out-dir " + quoted(s.dir),
                       s);
  REQUIRE(r.code == 0);
  std::stringstream csv(slurp(s.dir / "small_coupled8_full_sweep_split.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "value,total_cost,total_solve_time,equality_constraint_count");
  std::vector<long> counts;
  while (std::getline(csv, line)) counts.push_back(std::stol(line.substr(line.rfind(',') + 1)));
  REQUIRE(counts.size() == 9);
  // n_kappa known states come with n_kappa known outputs: each added known
  // output equation removes T_ini = 4 rows from (m + p_u) T_ini.
  const std::vector<long> expect = {40, 36, 32, 28, 24, 20, 16, 12, 8};
  CHECK(counts == expect);
}

TEST_CASE("lambda and tau_q sweeps") {
  Scratch s;
  Result r = cli("sweep " + quoted(kData / "small_coupled8.json") + " --sweep lambda --values 0.5 --out-dir " +
                     quoted(s.dir),
                 s);
  REQUIRE(r.code == 0);
  std::string table = slurp(s.dir / "small_coupled8_sweep_lambda.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);

  r = cli("sweep " + quoted(kData / "small_bess_1a.json") + " --sweep tau_q --values 1000,10000 --out-dir " +
              quoted(s.dir),
          s);
  REQUIRE(r.code == 0);
  table = slurp(s.dir / "small_bess_1a_sweep_tau_q.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
  CHECK(table.find("\n1000,") != std::string::npos);
  CHECK(table.find("\n10000,") != std::string::npos);

  r = cli("sweep " + quoted(kData / "small_coupled8.json") + " --sweep tau_q --values 10", s);
  CHECK(r.code == 2);
}
