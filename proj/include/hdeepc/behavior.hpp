#pragma once

// Hankel matrices, persistency of excitation, past/future partitioning and
// offline data collection.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hdeepc/densekit.hpp"
#include "hdeepc/plantlab.hpp"

namespace hdeepc {

/// Recorded input/output data; u is (m x T), y is (p_y x T).
struct DataLog {
  Mat u;
  Mat y;

  [[nodiscard]] Index length() const { return u.cols(); }
  /// Throws DimensionMismatch on unequal lengths, Error on non-finite data.
  void validate() const;
};

/// CSV with header "t,u1..um,y1..yp", one row per sample.
void write_csv(std::ostream& os, const DataLog& log);
[[nodiscard]] DataLog read_csv(std::istream& is);

/// Block Hankel matrix of depth L; column j stacks signal(:, j..j+L-1).
[[nodiscard]] Mat build_hankel(const Mat& signal, Index L);

struct PeCheck {
  bool exciting = false;
  Index rank = 0;
  Index required = 0;
};

/// Full row rank test of the depth-L Hankel matrix (singular values
/// >= tol * sigma_max).
[[nodiscard]] PeCheck check_pe(const Mat& u, Index L, double tol = 1e-9);

struct HankelBlocks {
  Mat U_P, U_F, Y_P, Y_F;
  Index T = 0, T_ini = 0, N = 0, m = 0, p_y = 0;

  [[nodiscard]] Index K() const { return U_P.cols(); }
};

[[nodiscard]] HankelBlocks partition_data(const DataLog& log, Index T_ini, Index N);

/// Keeps only the listed output channels (in the given order).
[[nodiscard]] DataLog restrict_outputs(const DataLog& log, const std::vector<Index>& channels);

/// The most recent T_ini inputs/outputs, stacked, plus the known-state
/// estimate when a hybrid controller needs one.
struct InitWindow {
  Vec u_ini;
  Vec y_ini;
  std::optional<Vec> x_kappa_hat;
};

struct ExcitationSpec {
  Index order = 1;
  Vec amplitude = Vec::Ones(1);
  std::uint64_t seed = 0;
};

struct CollectedData {
  DataLog log;
  Vec x_final;
};

/// Drives the plant from x0 with a persistently exciting input, starting
/// at plant time t0, and records (optionally noisy, optionally filtered)
/// outputs. An empty output filter keeps every channel.
[[nodiscard]] CollectedData collect_data(const TruthPlant& plant, const Vec& x0, Index T,
                                         const ExcitationSpec& excitation, const NoiseSpec& noise,
                                         const std::vector<Index>& output_filter = {}, std::int64_t t0 = 0);

/// || [U_P; Y_P; U_F; Y_F] g - [u_ini; y_ini; u; y] ||_inf
[[nodiscard]] double behavioral_residual(const HankelBlocks& blocks, const Vec& g, const InitWindow& w,
                                         const Vec& u, const Vec& y);

}  // namespace hdeepc
