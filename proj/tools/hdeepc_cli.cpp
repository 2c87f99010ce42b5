// hdeepc: run, audit or sweep a scenario described by a JSON config.
//
// Exit codes: 0 ok, 2 config error, 3 solver abort, 4 I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hdeepc/scenario.hpp"

namespace fs = std::filesystem;
using hdeepc::ScenarioConfig;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kSolverAbort = 3;
constexpr int kIoError = 4;

fs::path output_dir(const ScenarioConfig& cfg, const std::string& override_dir) {
  fs::path dir = override_dir.empty() ? fs::path(cfg.output.dir) : fs::path(override_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw hdeepc::IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw hdeepc::IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw hdeepc::IoError("write failed for " + path.string());
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw hdeepc::ConfigInvalid("values", "cannot read '" + item + "' as a number");
    }
  }
  if (values.empty()) throw hdeepc::ConfigInvalid("values", "no sweep values given");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid data-enabled predictive control scenarios"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_kind, sweep_values;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool abort_on_failure = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Scenario config (JSON)")->required();
    sub->add_option("--seed", seed, "Seed for every random source (default: loop.seed from the config)")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out-dir", out_dir, "Output directory (default: output.dir from the config)");
  };
  CLI::App* run = app.add_subcommand("run", "Run the closed loop and write trajectory CSV and summary JSON");
  add_common(run);
  run->add_flag("--abort-on-solver-failure", abort_on_failure, "Stop on an infeasible solve instead of holding");
  CLI::App* audit = app.add_subcommand("audit", "Check the standing assumptions without running the loop");
  add_common(audit);
  CLI::App* sweep = app.add_subcommand("sweep", "Repeat the run over a list of parameter values");
  add_common(sweep);
  sweep->add_option("--sweep", sweep_kind, "split, lambda or tau_q")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep->add_flag("--abort-on-solver-failure", abort_on_failure, "Stop on an infeasible solve instead of holding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    ScenarioConfig cfg = hdeepc::load_config(config_path);
    if (!seed_given) seed = cfg.loop.seed;
    if (abort_on_failure) cfg.loop.policy = hdeepc::FailurePolicy::Abort;

    if (*audit) {
      std::vector<hdeepc::Index> moved;
      const hdeepc::AssumptionReport rep = hdeepc::audit_scenario(cfg, seed, &moved);
      json doc = hdeepc::report_to_json(rep);
      doc["scenario"] = cfg.name;
      doc["moved_outputs"] = moved;
      std::cout << doc.dump(2) << "\n";
      if (!out_dir.empty()) write_json(output_dir(cfg, out_dir) / (cfg.output.prefix + "_audit.json"), doc);
      return kOk;
    }

    if (*run) {
      const hdeepc::ScenarioRun result = hdeepc::run_scenario(cfg, seed);
      const fs::path dir = output_dir(cfg, out_dir);
      const fs::path csv = dir / (cfg.output.prefix + "_trajectory.csv");
      std::ofstream out(csv);
      if (!out) throw hdeepc::IoError("cannot write " + csv.string());
      hdeepc::write_result_csv(out, result.result);
      if (!out) throw hdeepc::IoError("write failed for " + csv.string());
      json summary = hdeepc::summary_json(cfg, result);
      summary["seed"] = seed;
      write_json(dir / (cfg.output.prefix + "_summary.json"), summary);
      std::cout << summary.dump(2) << "\n";
      return kOk;
    }

    const hdeepc::SweepKind kind = hdeepc::sweep_from_string(sweep_kind);
    const std::vector<double> values = parse_values(sweep_values);
    const std::vector<hdeepc::SweepRow> rows = hdeepc::sweep_scenario(cfg, kind, values, seed);
    const fs::path dir = output_dir(cfg, out_dir);
    const fs::path csv = dir / (cfg.output.prefix + "_sweep_" + sweep_kind + ".csv");
    std::ofstream out(csv);
    if (!out) throw hdeepc::IoError("cannot write " + csv.string());
    out.precision(17);
    out << "value,total_cost,total_solve_time,equality_constraint_count\n";
    for (const auto& r : rows)
      out << r.value << "," << r.total_cost << "," << r.total_solve_time << "," << r.equality_constraint_count << "\n";
    if (!out) throw hdeepc::IoError("write failed for " + csv.string());
    std::cout << "value,total_cost,total_solve_time,equality_constraint_count\n";
    for (const auto& r : rows)
      std::cout << r.value << "," << r.total_cost << "," << r.total_solve_time << "," << r.equality_constraint_count
                << "\n";
    return kOk;
  } catch (const hdeepc::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const hdeepc::SolverAbort& e) {
    std::cerr << "solver abort: " << e.what() << "\n";
    return kSolverAbort;
  } catch (const hdeepc::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const hdeepc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
