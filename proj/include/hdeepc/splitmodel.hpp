#pragma once

// Known/unknown partition of a plant, the coupling transform (A_y, C_y) and
// assumption checks.
//
// Convention: unknown states come first and known states last. Outputs keep
// their original indices; y_u lists the unknown channels in increasing
// order, y_kappa the known ones.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdeepc/behavior.hpp"
#include "hdeepc/densekit.hpp"
#include "hdeepc/plantlab.hpp"

namespace hdeepc {

struct PartitionedPlant {
  Mat A_u, A_f, A_c, A_k;
  Mat B_u, B_k;
  Mat C_u, C_f, C_c, C_k;
  Mat D_u, D_k;
  std::vector<Index> unknown_outputs;
  std::vector<Index> known_outputs;

  [[nodiscard]] Index n_u() const { return A_u.rows(); }
  [[nodiscard]] Index n_k() const { return A_k.rows(); }
  [[nodiscard]] Index m() const { return B_u.cols(); }
  [[nodiscard]] Index p_u() const { return static_cast<Index>(unknown_outputs.size()); }
  [[nodiscard]] Index p_k() const { return static_cast<Index>(known_outputs.size()); }
};

struct TransformPair {
  Mat A_y;  ///< n_k x p_u
  Mat C_y;  ///< p_k x p_u
};

/// Everything a hybrid controller may read: the known blocks and the
/// transform pair, plus where each output channel lives.
struct KnownModel {
  Mat A_k, B_k, C_k, D_k, A_y, C_y;
  std::vector<Index> unknown_outputs;
  std::vector<Index> known_outputs;

  [[nodiscard]] Index n_k() const { return A_k.rows(); }
  [[nodiscard]] Index p_u() const { return static_cast<Index>(unknown_outputs.size()); }
  [[nodiscard]] Index p_k() const { return static_cast<Index>(known_outputs.size()); }
  [[nodiscard]] Index p() const { return p_u() + p_k(); }
};

/// The last n_kappa states are known; kappa_outputs are known output
/// channels. Throws IndexOutOfRange on bad indices.
[[nodiscard]] PartitionedPlant split_plant(const LtiPlant& plant, Index n_kappa,
                                           const std::vector<Index>& kappa_outputs);

/// Inverse of split_plant.
[[nodiscard]] LtiPlant compose(const PartitionedPlant& pp);

/// Joint least-squares solve of the six coupling equations, row by row.
/// Throws TransformInfeasible when the residual exceeds 1e-6 (1 + ||A_c||)
/// (respectively ||C_c||).
[[nodiscard]] TransformPair solve_transform(const PartitionedPlant& pp);

[[nodiscard]] KnownModel known_model(const PartitionedPlant& pp, const TransformPair& tp);

/// Partition with automatic fallback: known outputs whose C_y row is
/// infeasible are moved to the data-driven set. Throws TransformInfeasible
/// if the state coupling A_y still has no solution.
struct SplitResult {
  PartitionedPlant pp;
  TransformPair tp;
  std::vector<Index> moved_outputs;
};
[[nodiscard]] SplitResult split_with_fallback(const LtiPlant& plant, Index n_kappa,
                                              const std::vector<Index>& kappa_outputs);

enum class CheckStatus { Pass, Fail, NotApplicable };
[[nodiscard]] std::string to_string(CheckStatus s);

struct AssumptionCheck {
  CheckStatus status = CheckStatus::NotApplicable;
  double residual = 0.0;
  std::string detail;
};

struct AssumptionReport {
  AssumptionCheck coupling;        ///< transform pair exists
  AssumptionCheck excitation;      ///< PE of order T_ini + N + n
  AssumptionCheck initial_state;   ///< known-state estimate available
  Index achieved_rank = 0;
  Index required_rank = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] bool all_pass() const;
};

/// When pp is absent the controller is purely data-driven and the
/// coupling check is not applicable. data_inputs is the recorded input
/// signal (m x T); absent for pure model-based control.
[[nodiscard]] AssumptionReport validate_assumptions(const std::optional<PartitionedPlant>& pp,
                                                    const std::optional<TransformPair>& tp,
                                                    const std::optional<Mat>& data_inputs, Index n, Index T_ini,
                                                    Index N, bool state_estimate_available);

/// Random controllable plant whose last n_kappa states are known and whose
/// last p_kappa outputs are known, built so the coupling transform exists
/// (A_c = A_y C_u, C_c = C_y C_u, C_f = 0, D_u = 0). Spectral radius is
/// scaled into [0.5, 0.95].
[[nodiscard]] LtiPlant random_coupled_plant(Index n, Index m, Index p, Index n_kappa, Index p_kappa,
                                            std::uint64_t seed);

}  // namespace hdeepc
