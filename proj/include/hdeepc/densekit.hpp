#pragma once

// Dense linear algebra helpers and the embedded convex QP solver every
// controller builder targets.

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string_view>

#include "hdeepc/errors.hpp"

namespace hdeepc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex QP in standard form:
///
///   minimize   1/2 z'Pz + q'z
///   subject to l <= A z <= u
///
/// Equality rows are encoded with l == u; one-sided rows use +/-inf.
struct QpProblem {
  Mat P;
  Vec q;
  Mat A;
  Vec l;
  Vec u;

  [[nodiscard]] Index num_vars() const { return q.size(); }
  [[nodiscard]] Index num_constraints() const { return A.rows(); }
  /// Number of rows with l == u.
  [[nodiscard]] Index num_equalities() const;
};

enum class QpStatus { Optimal, MaxIterations, PrimalInfeasible, DualInfeasible };

[[nodiscard]] std::string_view to_string(QpStatus s);

/// Admm: operator splitting with polish. InteriorPoint: primal-dual
/// predictor-corrector with polish. Auto: ADMM for at most
/// auto_admm_iterations, then the interior-point method if ADMM has not
/// converged or certified infeasibility.
enum class QpMethod { Admm, InteriorPoint, Auto };

struct QpSettings {
  QpMethod method = QpMethod::Admm;
  int auto_admm_iterations = 2000;
  int max_ipm_iterations = 100;

  // Relative KKT tolerances: a residual r is reported as
  // r / (1 + magnitude of the terms it balances).
  double eps_primal = 1e-8;
  double eps_dual = 1e-8;
  int max_iterations = 50000;
  double psd_shift = 1e-10;

  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int check_every = 25;
  int scaling_iterations = 10;

  bool polish = true;
  int max_polish_rounds = 60;

  double eps_primal_infeasible = 1e-7;
  double eps_dual_infeasible = 1e-7;

  std::optional<Vec> initial_z;
};

struct QpSolution {
  Vec z;
  Vec y;  ///< constraint multipliers, P z + q + A'y = 0 at optimum
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  double primal_residual = kInf;
  double dual_residual = kInf;
  int iterations = 0;
  bool polished = false;
};

/// Operator-splitting (ADMM) solve with Ruiz equilibration, adaptive
/// penalty and an active-set polish on the detected active set.
///
/// Throws DimensionMismatch on inconsistent sizes and NonConvex when P is
/// indefinite beyond the probe shift. Infeasibility is reported through the
/// status, never thrown.
[[nodiscard]] QpSolution qp_solve(const QpProblem& p, const QpSettings& settings = {});

/// Relative KKT residuals of a candidate primal/dual pair.
struct KktResiduals {
  double primal = kInf;
  double dual = kInf;
};
[[nodiscard]] KktResiduals kkt_residuals(const QpProblem& p, const Vec& z, const Vec& y);

/// Minimizer of ||Ax - b||_2; the minimum-norm one when A is rank deficient.
[[nodiscard]] Vec least_squares_solve(const Mat& A, const Vec& b);

/// Numerical rank: count of singular values >= tol * sigma_max.
[[nodiscard]] Index rank_of(const Mat& A, double tol);

/// Spectral radius (largest eigenvalue modulus) of a square matrix.
[[nodiscard]] double spectral_radius(const Mat& A);

void check_finite(const Mat& m, std::string_view what);

}  // namespace hdeepc
