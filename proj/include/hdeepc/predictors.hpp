#pragma once

// QP encodings of MPC, DeePC and hybrid DeePC, their condensed forms, and
// the successive-convexification step for nonlinear known dynamics.
//
// All three full forms come from one hybrid builder: MPC is the hybrid
// problem with every state and output known (no data), DeePC is the hybrid
// problem with nothing known.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdeepc/behavior.hpp"
#include "hdeepc/densekit.hpp"
#include "hdeepc/plantlab.hpp"
#include "hdeepc/splitmodel.hpp"

namespace hdeepc {

enum class Variant { MPC, DeePC, HDeePC, HDeePC_Condensed, DeePC_Condensed, NL_HDeePC };
enum class Norm { L1, L2sq };

[[nodiscard]] std::string to_string(Variant v);
[[nodiscard]] Variant variant_from_string(const std::string& s);
[[nodiscard]] std::string to_string(Norm n);

/// Per-channel bounds; an empty set means unconstrained.
struct ConstraintSet {
  Vec lower;
  Vec upper;

  [[nodiscard]] bool empty() const { return lower.size() == 0 && upper.size() == 0; }
  /// True when some bound is finite.
  [[nodiscard]] bool active() const;
  void validate(Index channels, const char* what) const;
};

struct RegularizationSpec {
  double lambda_g = 0.0;
  double lambda_y = 0.0;
  Norm g_norm = Norm::L2sq;
  Norm slack_norm = Norm::L2sq;
  bool slack_enabled = false;
};

struct ScpSettings {
  int max_iters = 20;
  double tol = 1e-6;
  double trust_region = kInf;
};

struct ControllerSpec {
  Variant variant = Variant::MPC;
  Index N = 1;
  Index T_ini = 1;
  Mat Q;
  Mat R;
  ConstraintSet u_box;
  ConstraintSet y_box;
  RegularizationSpec reg;
  ScpSettings scp;

  /// Throws DimensionMismatch / NonConvex / Error on a malformed spec.
  void validate(Index m, Index p) const;
};

/// Inputs fixed over the horizon (e.g. a known exogenous channel).
/// values is (channels.size() x N).
struct InputPins {
  std::vector<Index> channels;
  Mat values;

  [[nodiscard]] bool empty() const { return channels.empty(); }
};

/// One affine slice of the known dynamics:
///   x_k(k+1) = A_k x_k + A_y y_u + B_k u + c
///   y_k(k)   = C_k x_k + C_y y_u + D_k u + d
struct KnownSlice {
  Mat A_k, A_y, B_k, C_k, C_y, D_k;
  Vec c, d;
};

/// Known dynamics over the horizon, one slice per predicted step.
struct KnownDynamics {
  std::vector<Index> unknown_outputs;
  std::vector<Index> known_outputs;
  Index n_k = 0;
  Index m = 0;
  std::vector<KnownSlice> slices;

  [[nodiscard]] Index p_u() const { return static_cast<Index>(unknown_outputs.size()); }
  [[nodiscard]] Index p_k() const { return static_cast<Index>(known_outputs.size()); }
};

[[nodiscard]] KnownDynamics lti_known_dynamics(const KnownModel& km, Index m, Index N);

struct StepDecision {
  Mat u_star;   ///< m x N
  Mat y_pred;   ///< p x N, original output order
  std::optional<Vec> g_star;
  Mat x_k_pred; ///< n_k x (N+1) (full state for MPC)
  Mat y_u_pred; ///< p_u x N
  Vec sigma;
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  bool converged = true;
  int scp_iterations = 0;
};

/// A built problem plus what is needed to decode its solution.
class BuiltQp {
 public:
  QpProblem qp;
  double constant = 0.0;  ///< added to the QP objective to give the tracking cost

  [[nodiscard]] StepDecision decode(const QpSolution& sol) const;
  [[nodiscard]] Index equality_rows() const { return qp.num_equalities(); }

  struct Block {
    Index offset = 0;
    Index size = 0;
  };
  // Full forms.
  Block g, u, y_u, x_k, y_k, sigma, t_g, t_sigma;
  // Condensed forms: u = Um g, y = Ym g + y0 (stacked, original order).
  bool condensed = false;
  Mat Um, Ym;
  Vec y0;

  Index m = 0, p = 0, N = 0, n_k = 0, p_u = 0;
  std::vector<Index> unknown_outputs;
  std::vector<Index> known_outputs;
};

/// General hybrid builder. blocks may be null only when there are no
/// unknown outputs. The window carries u_ini, the unknown-output y_ini and
/// the known-state estimate. Optional per-step input bounds (m x N) are
/// intersected with the spec's input box.
[[nodiscard]] BuiltQp build_hybrid(const KnownDynamics& known, const HankelBlocks* blocks, const ControllerSpec& spec,
                                   const InitWindow& window, const Mat& reference, const InputPins& pins = {},
                                   const Mat* u_lower = nullptr, const Mat* u_upper = nullptr);

[[nodiscard]] BuiltQp build_mpc(const LtiPlant& plant, const ControllerSpec& spec, const Vec& x_hat,
                                const Mat& reference, const InputPins& pins = {});

[[nodiscard]] BuiltQp build_deepc(const HankelBlocks& blocks, const ControllerSpec& spec, const InitWindow& window,
                                  const Mat& reference, const InputPins& pins = {});

/// blocks must hold only the unknown outputs. When the partition has no
/// unknown outputs the data is not used and the problem reduces to MPC on
/// the known model.
[[nodiscard]] BuiltQp build_hdeepc(const KnownModel& km, const HankelBlocks& blocks, const ControllerSpec& spec,
                                   const InitWindow& window, const Mat& reference, const InputPins& pins = {});

/// Condensed DeePC (known == nullptr) or HDeePC: decision variable g only.
/// Throws BoxesUnsupported when the spec has active boxes, and Error when
/// slack or an L1 penalty on g is requested.
[[nodiscard]] BuiltQp build_condensed(const HankelBlocks& blocks, const KnownDynamics* known,
                                      const ControllerSpec& spec, const InitWindow& window, const Mat& reference,
                                      const InputPins& pins = {});

[[nodiscard]] StepDecision solve_step(const BuiltQp& built, const QpSettings& settings = {});

/// Nonlinear known dynamics x_k+ = f(x_k, y_u, u), y_k = h(x_k, y_u, u).
/// linearize, when set, returns the affine slice about a point; otherwise
/// central finite differences are used.
struct NonlinearKnownModel {
  std::vector<Index> unknown_outputs;
  std::vector<Index> known_outputs;
  Index n_k = 0;
  Index m = 0;
  std::function<Vec(const Vec& x, const Vec& y_u, const Vec& u)> f;
  std::function<Vec(const Vec& x, const Vec& y_u, const Vec& u)> h;
  std::function<KnownSlice(const Vec& x, const Vec& y_u, const Vec& u)> linearize;
};

[[nodiscard]] KnownSlice linearize_known(const NonlinearKnownModel& model, const Vec& x, const Vec& y_u,
                                         const Vec& u);

/// Known SoC equation of the battery model with the efficiency factor
/// taken from the sign of u1 at the linearization point.
[[nodiscard]] NonlinearKnownModel bess_known_model(const BessPlant& plant);

/// Linearization trajectory: x_k (n_k x (N+1)), y_u (p_u x N), u (m x N).
struct ScpTrajectory {
  Mat x_k, y_u, u;
};

/// Largest violation of the nonlinear known dynamics along a trajectory.
[[nodiscard]] double known_dynamics_residual(const NonlinearKnownModel& model, const ScpTrajectory& traj,
                                             const Mat& y_k);

/// Successive convexification. Converges when the input plan moves by at
/// most scp.tol or re-linearizing reproduces the slices just used. Returns
/// the iterate with the smallest dynamics residual, with converged = false
/// when the iteration cap is hit (max_iters = 0 returns the initial plan).
[[nodiscard]] StepDecision nl_hdeepc_step(const NonlinearKnownModel& model, const HankelBlocks& blocks,
                                          const ControllerSpec& spec, const InitWindow& window, const Mat& reference,
                                          const InputPins& pins, const std::optional<ScpTrajectory>& initial,
                                          const QpSettings& settings = {});

/// Sum over the horizon of ||y - r||^2_Q + ||u||^2_R.
[[nodiscard]] double tracking_cost(const Mat& y, const Mat& u, const Mat& reference, const Mat& Q, const Mat& R);

}  // namespace hdeepc
