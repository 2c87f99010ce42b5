#pragma once

// Scenario configuration (JSON) and the run/audit/sweep drivers behind the
// command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdeepc/looprunner.hpp"

namespace hdeepc {

struct PlantConfig {
  std::string builtin;  ///< bess_1a, bess_1b, bess_1c, coupled8, matrices (inline), file
  double tau_q = 1e3;
  double eta = 1.0;
  double a = 0.9;
  double b = 0.2;
  bool full_state_output = false;
  std::optional<LtiPlant> matrices;
  double tv_sd = 0.0;
  std::vector<Index> tv_rows;
  Vec x0;
};

struct ControllerConfig {
  Variant variant = Variant::MPC;
  Index N = 10;
  Index T_ini = 1;
  Index T = 0;
  Mat Q, R;
  ConstraintSet u_box, y_box;
  RegularizationSpec reg;
  ScpSettings scp;
  double data_amplitude = 1.0;
  bool follow_plant = false;
  QpMethod solver = QpMethod::Auto;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::None;
  Vec scale = Vec::Zero(1);
};

struct LoopConfigFile {
  Index steps = 0;
  Index s = 1;
  std::uint64_t seed = 1;
  NoiseConfig noise;
  NoiseConfig state_noise;
  Vec reference;
  std::vector<Index> disturbance_channels;
  double disturbance_sd = 1.0;
  Index disturbance_window = 10;
  StateSource state_source = StateSource::FullMeasurement;
  Vec observer_offset;  ///< initial estimate error of the known states
  FailurePolicy policy = FailurePolicy::HoldLast;
};

struct PartitionConfig {
  bool present = false;
  Index n_kappa = 0;
  std::vector<Index> kappa_outputs;
  std::optional<Mat> A_y, C_y;
};

struct OutputConfig {
  std::string dir = "out";
  std::string prefix;
};

struct ScenarioConfig {
  std::string name;
  PlantConfig plant;
  ControllerConfig controller;
  LoopConfigFile loop;
  PartitionConfig partition;
  OutputConfig output;
};

/// Parses and validates a configuration document. Throws ConfigInvalid
/// naming the offending key. Relative plant file paths resolve against
/// base_dir.
[[nodiscard]] ScenarioConfig parse_config(const nlohmann::json& doc, const std::string& name = "scenario",
                                          const std::filesystem::path& base_dir = {});
[[nodiscard]] ScenarioConfig load_config(const std::filesystem::path& path);

/// The plant the closed loop runs against, and the LTI model available to
/// model-based controllers.
[[nodiscard]] TruthPlant make_truth_plant(const ScenarioConfig& cfg, std::uint64_t seed);
[[nodiscard]] LtiPlant make_model(const ScenarioConfig& cfg);

struct ScenarioRun {
  ClosedLoopResult result;
  AssumptionReport report;
  std::vector<Index> moved_outputs;
  Index equality_rows = 0;  ///< equality rows of the first solved problem
  Index condensed_equality_rows = 0;  ///< (m + p_u) T_ini for data-driven variants
};

/// Builds data, controller and loop from a config and runs it. The seed
/// drives every random source (data, noise, disturbance, warm fill,
/// time variation).
[[nodiscard]] ScenarioRun run_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

/// Assumption report for a config without running the loop.
[[nodiscard]] AssumptionReport audit_scenario(const ScenarioConfig& cfg, std::uint64_t seed,
                                              std::vector<Index>* moved_outputs = nullptr);

[[nodiscard]] nlohmann::json report_to_json(const AssumptionReport& rep);
[[nodiscard]] nlohmann::json summary_json(const ScenarioConfig& cfg, const ScenarioRun& run);

enum class SweepKind { Split, Lambda, TauQ };
[[nodiscard]] SweepKind sweep_from_string(const std::string& s);

struct SweepRow {
  double value = 0.0;
  double total_cost = 0.0;
  double total_solve_time = 0.0;
  Index equality_constraint_count = 0;
};

/// One independent run per value, fanned out in parallel. For split sweeps
/// the value is the number of known states; the known outputs are the last
/// min(value, p) channels.
[[nodiscard]] std::vector<SweepRow> sweep_scenario(const ScenarioConfig& cfg, SweepKind kind,
                                                   const std::vector<double>& values, std::uint64_t seed);

}  // namespace hdeepc
