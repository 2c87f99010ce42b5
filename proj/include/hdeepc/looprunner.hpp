#pragma once

// Receding-horizon execution against a simulated plant: controllers, the
// closed loop, the partial observer, cost accounting and equivalence runs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hdeepc/behavior.hpp"
#include "hdeepc/plantlab.hpp"
#include "hdeepc/predictors.hpp"
#include "hdeepc/splitmodel.hpp"

namespace hdeepc {

/// Everything a controller sees at a solve instant.
struct StepContext {
  std::int64_t t = 0;         ///< plant clock
  Vec u_ini;                  ///< last T_ini inputs, stacked
  Vec y_ini;                  ///< last T_ini measured outputs (all channels), stacked
  Vec x_hat;                  ///< full-state estimate (model-based control)
  std::optional<Vec> x_kappa_hat;  ///< observer estimate of the known states
  Mat reference;              ///< p x N
  InputPins pins;
  std::optional<LtiPlant> model;   ///< plant model in effect at t, when the truth has one
};

class Controller {
 public:
  virtual ~Controller() = default;
  [[nodiscard]] virtual StepDecision decide(const StepContext& ctx) = 0;
  [[nodiscard]] virtual const ControllerSpec& spec() const = 0;
  /// Number of known states whose estimate the controller consumes.
  [[nodiscard]] virtual Index known_states() const { return 0; }
  /// Equality rows of the most recently built problem.
  [[nodiscard]] Index last_equality_rows() const { return last_equality_rows_; }

  QpSettings qp_settings;

 protected:
  Index last_equality_rows_ = 0;
};

/// Full-model MPC. When follow_plant is set, the model in the step context
/// (e.g. the current time-varying instance) replaces the fixed one.
class MpcController : public Controller {
 public:
  MpcController(LtiPlant model, ControllerSpec spec, bool follow_plant = false);
  [[nodiscard]] StepDecision decide(const StepContext& ctx) override;
  [[nodiscard]] const ControllerSpec& spec() const override { return spec_; }

 private:
  LtiPlant model_;
  ControllerSpec spec_;
  bool follow_plant_;
};

class DeepcController : public Controller {
 public:
  /// blocks built from data holding every output channel.
  DeepcController(HankelBlocks blocks, ControllerSpec spec);
  [[nodiscard]] StepDecision decide(const StepContext& ctx) override;
  [[nodiscard]] const ControllerSpec& spec() const override { return spec_; }

 private:
  HankelBlocks blocks_;
  ControllerSpec spec_;
};

/// Hybrid controller on an LTI known part. blocks hold only the unknown
/// outputs. With follow_plant set, the known blocks and transform are
/// re-extracted from the step-context model at every solve.
class HdeepcController : public Controller {
 public:
  HdeepcController(const LtiPlant& model, Index n_kappa, std::vector<Index> kappa_outputs, HankelBlocks blocks,
                   ControllerSpec spec, bool follow_plant = false);
  [[nodiscard]] StepDecision decide(const StepContext& ctx) override;
  [[nodiscard]] const ControllerSpec& spec() const override { return spec_; }
  [[nodiscard]] Index known_states() const override { return known_.n_k(); }
  [[nodiscard]] const KnownModel& known_model() const { return known_; }
  [[nodiscard]] const std::vector<Index>& moved_outputs() const { return moved_; }

 private:
  Index n_kappa_;
  std::vector<Index> kappa_outputs_;
  KnownModel known_;
  std::vector<Index> moved_;
  HankelBlocks blocks_;
  ControllerSpec spec_;
  bool follow_plant_;
};

/// Hybrid controller on nonlinear known dynamics, solved by successive
/// convexification warm-started from the shifted previous plan.
class NlHdeepcController : public Controller {
 public:
  NlHdeepcController(NonlinearKnownModel model, HankelBlocks blocks, ControllerSpec spec);
  [[nodiscard]] StepDecision decide(const StepContext& ctx) override;
  [[nodiscard]] const ControllerSpec& spec() const override { return spec_; }
  [[nodiscard]] Index known_states() const override { return model_.n_k; }

 private:
  NonlinearKnownModel model_;
  HankelBlocks blocks_;
  ControllerSpec spec_;
  std::optional<ScpTrajectory> previous_;
};

/// Partial Luenberger observer of the known states.
struct ObserverSpec {
  Mat gain;  ///< n_k x p_k
  Vec x0;

  /// Throws DimensionMismatch on bad shapes and Error unless
  /// rho(A_k - gain C_k) < 1.
  void validate(const KnownModel& km) const;
};

[[nodiscard]] Vec observer_step(const ObserverSpec& obs, const KnownModel& km, const Vec& x_hat, const Vec& y_u,
                                const Vec& y_k, const Vec& u);

/// Stationary predictor gain from the Riccati recursion with identity
/// noise weights; A_k - L C_k is stable when (A_k, C_k) is detectable.
[[nodiscard]] Mat design_observer_gain(const Mat& A_k, const Mat& C_k);

enum class StateSource { FullMeasurement, Observer };
enum class FailurePolicy { HoldLast, Abort };

class SolverAbort : public Error {
 public:
  using Error::Error;
};

struct LoopConfig {
  Index steps = 0;
  Index s = 1;
  Vec x0;
  std::int64_t t0 = 0;  ///< plant clock at the first warm-fill sample
  NoiseSpec output_noise;
  NoiseSpec state_noise;  ///< added to the full-state estimate handed to MPC
  std::function<Vec(Index)> reference;  ///< step (0 = first control step) -> p-vector
  /// Exogenous input channels, pre-drawn; column j applies at warm-fill
  /// sample j (so control step t uses column T_ini + t).
  std::vector<Index> disturbance_channels;
  Mat disturbance;
  ExcitationSpec warm_fill;
  StateSource state_source = StateSource::FullMeasurement;
  std::optional<ObserverSpec> observer;
  std::optional<KnownModel> observer_model;
  FailurePolicy policy = FailurePolicy::HoldLast;
  Mat Q, R;  ///< stage-cost weights for accounting
};

struct ClosedLoopResult {
  Mat warm_u, warm_y;      ///< warm-fill samples
  Mat u_applied;           ///< m x steps
  Mat y_measured;          ///< p x steps
  Mat x_true;              ///< n x (steps + 1)
  Mat x_kappa_hat;         ///< n_k x steps (observer runs only)
  Mat reference;           ///< p x steps
  std::vector<double> stage_costs;
  double total_cost = 0.0;
  std::vector<double> solve_times;
  std::vector<QpStatus> statuses;
  std::vector<double> objectives;
  std::vector<std::vector<Vec>> plans;  ///< applied portion of each solve's input plan
  std::vector<Index> equality_rows;
  int scp_not_converged = 0;

  [[nodiscard]] double mean_solve_time() const;
  [[nodiscard]] double mean_stage_cost() const;
};

[[nodiscard]] ClosedLoopResult run_receding_horizon(const TruthPlant& plant, Controller& controller,
                                                    const LoopConfig& loop);

/// sum_k ||y_k - r_k||^2_Q + ||u_k||^2_R over the columns given.
[[nodiscard]] double evaluate_cost(const Mat& y, const Mat& u, const Mat& reference, const Mat& Q, const Mat& R);

/// Per-step CSV: t, u1..um, y1..yp, r1..rp, stage_cost, solve_time, status.
void write_result_csv(std::ostream& os, const ClosedLoopResult& r);

struct SplitChoice {
  Index n_kappa = 0;
  std::vector<Index> kappa_outputs;
};

struct EquivalenceRow {
  SplitChoice split;
  std::vector<Index> moved_outputs;
  CheckStatus coupling = CheckStatus::NotApplicable;
  double coupling_residual = 0.0;
  double hdeepc_vs_mpc = kInf;
  double deepc_vs_mpc = kInf;
  double hdeepc_vs_deepc = kInf;
  bool pass = false;
  std::string note;
};

struct EquivalenceSettings {
  Index steps = 20;
  Index T = 0;  ///< data length; 0 picks (m+1)(T_ini+N+n) + 10
  double tol = 1e-6;
  std::uint64_t seed = 1;
  bool parallel = true;
};

/// Noiseless closed-loop comparison of MPC, DeePC and HDeePC for each split.
/// Splits whose coupling transform does not exist are reported as such
/// rather than compared.
[[nodiscard]] std::vector<EquivalenceRow> equivalence_check(const LtiPlant& plant, const ControllerSpec& spec,
                                                            const std::vector<SplitChoice>& splits,
                                                            const EquivalenceSettings& settings);

}  // namespace hdeepc
