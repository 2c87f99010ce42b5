#include <Eigen/Eigenvalues>

#include <algorithm>
#include <string>

#include "hdeepc/densekit.hpp"

namespace hdeepc {

Vec least_squares_solve(const Mat& A, const Vec& b) {
  if (A.rows() != b.size()) {
    throw DimensionMismatch("least_squares_solve: A has " + std::to_string(A.rows()) +
                            " rows but b has " + std::to_string(b.size()));
  }
  if (A.cols() == 0) return Vec::Zero(0);
  if (A.rows() == 0) return Vec::Zero(A.cols());
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  // Rank threshold relative to the largest pivot, matching rank_of's notion
  // of "numerically zero".
  cod.setThreshold(1e-13);
  Vec x = cod.solve(b);
  // One refinement pass recovers the digits lost to pivoting.
  const Vec r = b - A * x;
  x += cod.solve(r);
  return x;
}

Index rank_of(const Mat& A, double tol) {
  if (A.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cut = tol * s(0);
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) >= cut) ++r;
  return r;
}

double spectral_radius(const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("spectral_radius: matrix is not square");
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void check_finite(const Mat& m, std::string_view what) {
  if (!m.allFinite()) throw Error(std::string(what) + ": non-finite entries");
}

}  // namespace hdeepc
