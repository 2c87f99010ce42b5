#pragma once

// Plant models (LTI, time-varying, nonlinear BESS) and the signal
// generators used for offline data collection and closed-loop simulation.
//
// Signals are stored as (channels x samples) matrices: column t is the
// sample at time t, so the column-major storage of a signal is the stacked
// time-major, channel-minor vector.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "hdeepc/densekit.hpp"

namespace hdeepc {

struct LtiPlant {
  Mat A, B, C, D;

  [[nodiscard]] Index n() const { return A.rows(); }
  [[nodiscard]] Index m() const { return B.cols(); }
  [[nodiscard]] Index p() const { return C.rows(); }

  /// Throws DimensionMismatch unless A is n x n, B n x m, C p x n, D p x m.
  void validate() const;
};

struct StepResult {
  Vec x_next;
  Vec y;
};

/// x_next = A x + B u, y = C x + D u.
[[nodiscard]] StepResult lti_step(const LtiPlant& plant, const Vec& x, const Vec& u);

/// Nominal plant whose A rows are scaled entrywise by (1 + delta),
/// delta ~ N(0, sd^2), independently per entry and per time step.
struct TimeVaryingPlant {
  LtiPlant nominal;
  double perturbation_sd = 0.0;
  std::vector<Index> perturbed_rows;
  std::uint64_t rng_seed = 0;
};

/// Plant in effect at step t; deterministic in (rng_seed, t).
[[nodiscard]] LtiPlant perturb_time_varying(const TimeVaryingPlant& tv, std::int64_t t);

enum class BessMode { Linear, EfficiencyNonlinear, StrongNonlinear };

/// DC-microgrid node with a battery: x = (node voltage deviation, line
/// current, state of charge), u = (battery current, load fluctuation),
/// y = (x1, x3).
struct BessPlant {
  double tau_q = 1e3;
  double eta = 1.0;
  BessMode mode = BessMode::Linear;
  double a = 0.9;
  double b = 0.2;

  /// Charge/discharge efficiency factor: 1/eta when discharging (u1 >= 0).
  [[nodiscard]] double alpha(double u1) const { return u1 >= 0.0 ? 1.0 / eta : eta; }
  /// The linear (eta = 1) discrete-time matrices.
  [[nodiscard]] LtiPlant linear_model() const;
};

/// Arbitrary user-supplied dynamics.
struct NonlinearPlant {
  Index n = 0, m = 0, p = 0;
  std::function<StepResult(const Vec& x, const Vec& u)> step;
};

[[nodiscard]] StepResult nl_step(const BessPlant& plant, const Vec& x, const Vec& u);
[[nodiscard]] StepResult nl_step(const NonlinearPlant& plant, const Vec& x, const Vec& u);

/// The system a closed loop runs against.
using TruthPlant = std::variant<LtiPlant, TimeVaryingPlant, BessPlant, NonlinearPlant>;

[[nodiscard]] StepResult simulate_step(const TruthPlant& plant, const Vec& x, const Vec& u, std::int64_t t);
[[nodiscard]] Index state_dim(const TruthPlant& plant);
[[nodiscard]] Index input_dim(const TruthPlant& plant);
[[nodiscard]] Index output_dim(const TruthPlant& plant);

/// The LTI model a controller would be handed for this plant at time t:
/// the plant itself, its perturbed instance, or the BESS linear matrices.
/// Empty for user nonlinear plants.
[[nodiscard]] std::optional<LtiPlant> model_at(const TruthPlant& plant, std::int64_t t);

enum class NoiseKind { None, Gaussian, Uniform };

/// Gaussian: scale is the standard deviation. Uniform: samples lie in
/// [-scale, scale]. A single-entry scale broadcasts to every channel.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  Vec scale = Vec::Zero(1);
  std::uint64_t rng_seed = 0;
};

class NoiseSource {
 public:
  NoiseSource(NoiseSpec spec, Index channels);
  [[nodiscard]] Vec draw();

 private:
  NoiseSpec spec_;
  Index channels_;
  std::mt19937_64 rng_;
};

/// Uniform random input in [-amplitude, amplitude], persistently exciting
/// of the given order. Throws LengthTooShort when T < (m+1)*order - 1 and
/// ExcitationFailed if 10 seeds in a row fail the rank test.
[[nodiscard]] Mat generate_pe_input(Index m, Index T, Index order, std::uint64_t seed,
                                    const Vec& amplitude = Vec::Ones(1));

/// Same distribution as generate_pe_input, without the excitation check.
[[nodiscard]] Mat random_input(Index m, Index T, std::uint64_t seed, const Vec& amplitude = Vec::Ones(1));

/// N(0, sd^2) samples smoothed by a trailing moving average of `window`.
[[nodiscard]] Vec moving_average_noise(Index T, double sd, Index window, std::uint64_t seed);

/// col(C, CA, ..., CA^{N-1})
[[nodiscard]] Mat observability_matrix(const Mat& A, const Mat& C, Index N);

/// Lower block-triangular Toeplitz matrix of Markov parameters
/// (D on the diagonal, CA^{k}B below it).
[[nodiscard]] Mat toeplitz_matrix(const Mat& A, const Mat& B, const Mat& C, const Mat& D, Index N);

/// Rank of the Kalman controllability matrix equals n.
[[nodiscard]] bool is_controllable(const Mat& A, const Mat& B);

/// Eight-state coupled drive surrogate: two first-order motor states
/// (measured) driving a chain of three damped oscillating discs. Outputs are
/// (x1, x2, angle of the middle disc), or the full state when
/// full_state_output is set.
[[nodiscard]] LtiPlant coupled8_surrogate(bool full_state_output = false);

/// Flattens a (channels x samples) signal into its stacked vector.
[[nodiscard]] Vec stack(const Mat& signal);
/// Inverse of stack.
[[nodiscard]] Mat unstack(const Vec& stacked, Index channels);

}  // namespace hdeepc
